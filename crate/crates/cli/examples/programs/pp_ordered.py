def read_case():
    """Read n, k and the array."""
    n, k = map(int, input().split())
    return k, list(map(int, input().split()))[:n]


def count_pairs(k, a):
    """Count pairs with a sum divisible by k."""
    total = 0
    for i, x in enumerate(a):
        for j, y in enumerate(a):
            if i != j and (x + y) % k == 0:
                total += 1
    return total


print(count_pairs(*read_case()))
