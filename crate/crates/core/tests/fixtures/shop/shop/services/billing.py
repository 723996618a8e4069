from shop.services.pricing import price_order
from shop.services.notify import send_receipt
from shop.util.log import get_logger

log = get_logger("billing")


class PaymentError(Exception):
    pass


class Gateway:
    def charge(self, customer, amount):
        raise NotImplementedError


class FakeGateway(Gateway):
    def __init__(self, fail_over=None):
        self.fail_over = fail_over
        self.charged = []

    def charge(self, customer, amount):
        if self.fail_over is not None and amount > self.fail_over:
            raise PaymentError("declined")
        self.charged.append((customer.email, amount))
        return True


def checkout(customer, order, gateway, config):
    amount = price_order(customer, order, config["tax_rate"])
    try:
        gateway.charge(customer, amount)
    except PaymentError as exc:
        log.error("payment failed: %s", exc)
        return None
    order.mark_paid()
    customer.add_order(order)
    send_receipt(customer, order, amount)
    return amount


def retry_checkout(customer, order, gateway, config, attempts=3):
    while attempts > 0:
        result = checkout(customer, order, gateway, config)
        if result is not None:
            return result
        attempts -= 1
    return None
