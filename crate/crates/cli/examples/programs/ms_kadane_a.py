import sys


def read_input():
    """Read the array length and values from standard input."""
    data = sys.stdin.read().split()
    n = int(data[0])
    return [int(x) for x in data[1:1 + n]]


def max_subarray_sum(values):
    """Return the largest sum of a non-empty contiguous block of values."""
    best = current = values[0]
    for x in values[1:]:
        current = max(x, current + x)
        best = max(best, current)
    return best


def main():
    values = read_input()
    print(max_subarray_sum(values))


main()
