def count_vowels(s):
    """Count vowels and report the total as text."""
    n = sum(ch in "aeiouAEIOU" for ch in s)
    return str(n)
