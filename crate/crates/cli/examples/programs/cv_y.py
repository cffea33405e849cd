def is_vowel(ch):
    """Vowels, treating y as one too."""
    return ch.lower() in "aeiouy"


def count_vowels(s):
    """Number of vowels in s."""
    return sum(is_vowel(ch) for ch in s)
