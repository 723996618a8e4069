def clamp(value, low, high):
    return max(low, min(high, value))


def round_money(value):
    return round(value + 1e-9, 2)


def mean(values):
    values = list(values)
    if not values:
        return 0.0
    return sum(values) / len(values)


def percentile(values, p):
    ordered = sorted(values)
    if not ordered:
        raise ValueError("empty")
    k = (len(ordered) - 1) * p
    lo = int(k)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (k - lo)
