import sys


def parse_numbers(text):
    """Split the whole input into integers, dropping the leading count."""
    numbers = [int(tok) for tok in text.split()]
    return numbers[1:1 + numbers[0]]


def best_segment_sum(values):
    """Largest prefix-sum difference, which is the best contiguous sum."""
    prefix = 0
    lowest = 0
    best = None
    for v in values:
        prefix += v
        candidate = prefix - lowest
        if best is None or candidate > best:
            best = candidate
        lowest = min(lowest, prefix)
    return best


print(best_segment_sum(parse_numbers(sys.stdin.read())))
