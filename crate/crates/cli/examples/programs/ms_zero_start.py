def read_input():
    """Read the array length and values from standard input."""
    n = int(input())
    return list(map(int, input().split()))[:n]


def max_subarray_sum(values):
    """Track the best running sum, resetting at zero."""
    best = 0
    current = 0
    for x in values:
        current = max(0, current + x)
        best = max(best, current)
    return best


print(max_subarray_sum(read_input()))
