from shop.util.mathx import clamp, round_money


def discount_for(customer, order):
    tier = customer.tier()
    if tier == "gold":
        rate = 0.1
    elif tier == "silver":
        rate = 0.05
    else:
        rate = 0.0
    if order.total() > 500 and not customer.vip:
        rate += 0.02
    return clamp(rate, 0.0, 0.15)


def price_order(customer, order, tax_rate):
    gross = order.total()
    net = gross * (1 - discount_for(customer, order))
    return round_money(net * (1 + tax_rate))


def bulk_price(unit, quantity, breaks=None):
    breaks = breaks or [(100, 0.8), (10, 0.9)]
    for threshold, factor in breaks:
        if quantity >= threshold:
            return round_money(unit * quantity * factor)
    return round_money(unit * quantity)


def legacy_price(unit, quantity, currency, tax, rounding, region, coupon):
    # Kept for old callers; nothing in the shop uses it any more.
    value = unit * quantity
    if coupon:
        value -= 5
    if region == "EU":
        value *= 1 + tax
    return round(value, rounding)
