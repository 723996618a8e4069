import argparse
import sys

from shop.config import load_config
from shop.models import Customer, Order, Product
from shop.models.inventory import Inventory
from shop.services.billing import FakeGateway, retry_checkout
from shop.services.shipping import shipping_cost


def build_parser():
    p = argparse.ArgumentParser(prog="shop")
    p.add_argument("--config")
    p.add_argument("--items", type=int, default=1)
    return p


def demo(args):
    cfg = load_config(args.config)
    inv = Inventory()
    book = Product(1, "Book", 12.5, weight=0.4)
    inv.restock(book.key(), 10)
    alice = Customer(7, "Alice", " Alice@Example.com ")
    order = Order(100, alice)
    order.add(book, args.items)
    if not inv.reserve_order(order):
        print("out of stock")
        return 1
    paid = retry_checkout(alice, order, FakeGateway(), cfg)
    print(paid, shipping_cost(order, cfg))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    return demo(args)


if __name__ == "__main__":
    sys.exit(main())
