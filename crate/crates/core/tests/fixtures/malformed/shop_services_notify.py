from shop.util.text import render_template
from shop.util.log import get_logger

log = get_logger("notify")

RECEIPT = "Dear {name}, you paid {amount} for order {order}."


def send_receipt(customer, order, amount):
    body = render_template(RECEIPT, name=customer.name, amount=amount, order=order.key())
    deliver(customer.email, body)


def deliver(address, body):
    # TODO: real mail transport
    log.info("mail to %s: %s", address, body)


def broadcast(customers, message):
    sent = 0
    for c in customers:
        if c.email and not c.email.endswith(".invalid"):
            deliver(c.email, message)
            sent += 1
    return sent
