import sys


def read_input():
    """Read the array length and values from standard input."""
    data = sys.stdin.read().split()
    n = int(data[0])
    return [int(x) for x in data[1:1 + n]]


def kadane(arr):
    """Running-sum scan that restarts when the sum drops below an element."""
    running = answer = arr[0]
    for value in arr[1:]:
        running = value if running < 0 else running + value
        answer = max(answer, running)
    return answer


def main():
    print(kadane(read_input()))


main()
