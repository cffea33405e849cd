def normalize(text):
    """Lower-case the text so the vowel check is case-insensitive."""
    return text.lower()


def count_vowels(s):
    """Count a, e, i, o and u in s."""
    total = 0
    for ch in normalize(s):
        if ch in "aeiou":
            total += 1
    return total
