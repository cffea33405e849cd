def read_values():
    """Read the values, ignoring the count line."""
    input()
    return [int(x) for x in input().split()]


def sum_of_positives(values):
    """Add up every positive value."""
    return sum(v for v in values if v > 0)


print(sum_of_positives(read_values()))
