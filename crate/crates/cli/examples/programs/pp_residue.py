from collections import Counter


def residue_counts(values, k):
    """How many values fall in each residue class modulo k."""
    return Counter(v % k for v in values)


def pairs_within(count):
    """Unordered pairs that can be formed from count items."""
    return count * (count - 1) // 2


def count_pairs(values, k):
    """Pairs (i < j) whose sum is a multiple of k."""
    counts = residue_counts(values, k)
    total = pairs_within(counts[0])
    for r in range(1, k // 2 + 1):
        if 2 * r == k:
            total += pairs_within(counts[r])
        else:
            total += counts[r] * counts[k - r]
    return total


def main():
    n, k = map(int, input().split())
    values = list(map(int, input().split()))[:n]
    print(count_pairs(values, k))


main()
