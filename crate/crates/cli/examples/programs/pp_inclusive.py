def read_case():
    """Read n, k and the array."""
    n, k = map(int, input().split())
    a = list(map(int, input().split()))
    return n, k, a


def count_pairs(n, k, a):
    """Count index pairs whose sum is divisible by k."""
    count = 0
    for i in range(n):
        for j in range(i, n):
            if (a[i] + a[j]) % k == 0:
                count += 1
    return count


print(count_pairs(*read_case()))
