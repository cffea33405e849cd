def count_vowels(s):
    """Count the lower-case vowels."""
    return len([c for c in s if c in "aeiou"])
