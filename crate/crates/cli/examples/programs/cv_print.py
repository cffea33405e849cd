def count_vowels(s):
    """Print the vowel count."""
    print(sum(ch in "aeiouAEIOU" for ch in s))
