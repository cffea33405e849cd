VOWELS = set("aeiou")


def is_vowel(ch):
    """True when ch is a vowel, ignoring case."""
    return ch.lower() in VOWELS


def count_vowels(s):
    """Number of vowels in s."""
    return sum(1 for ch in s if is_vowel(ch))
