from shop.models import Customer, Order, Product
from shop.services.pricing import bulk_price, discount_for


def make_order(vip=False):
    c = Customer(1, "Bob", "bob@example.com", vip=vip)
    o = Order(2, c)
    o.add(Product(3, "Lamp", 40.0), 2)
    return c, o


def test_bulk_breaks():
    assert bulk_price(1.0, 100) == 80.0
    assert bulk_price(1.0, 10) == 9.0
    assert bulk_price(1.0, 1) == 1.0


def test_vip_discount():
    c, o = make_order(vip=True)
    assert discount_for(c, o) == 0.1
