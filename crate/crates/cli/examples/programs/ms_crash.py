def read_input():
    """Read the array."""
    n = int(input())
    return list(map(int, input().split()))[:n]


def max_subarray_sum(values):
    """Brute force over all segments."""
    best = values[0]
    for i in range(len(values)):
        total = 0
        for j in range(i, len(values)):
            total += values[j]
            best = max(best, totl)
    return best


print(max_subarray_sum(read_input()))
