from collections import Counter


def residue_counts(values, k):
    """How many values fall in each residue class modulo k."""
    return Counter(v % k for v in values)


def count_pairs(values, k):
    """Pair residue r with k - r."""
    counts = residue_counts(values, k)
    total = 0
    for r in range(1, (k + 1) // 2):
        total += counts[r] * counts[k - r]
    return total


n, k = map(int, input().split())
print(count_pairs(list(map(int, input().split()))[:n], k))
