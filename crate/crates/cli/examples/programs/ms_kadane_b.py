def load_array():
    """Read n, then n integers on the next line."""
    n = int(input())
    arr = list(map(int, input().split()))
    return arr[:n]


def kadane(arr):
    """Running-sum scan that restarts when the sum drops below an element."""
    running = arr[0]
    answer = arr[0]
    for value in arr[1:]:
        running = value if running < 0 else running + value
        answer = max(answer, running)
    return answer


if __name__ == "__main__":
    print(kadane(load_array()))
