from shop.models.product import Entity
from shop.util.text import normalise_email


class Customer(Entity):
    def __init__(self, ident, name, email, vip=False):
        super().__init__(ident)
        self.name = name
        self.email = normalise_email(email)
        self.vip = vip
        self.orders = []

    def add_order(self, order):
        self.orders.append(order)

    def lifetime_value(self):
        total = 0
        for order in self.orders:
            if order.paid:
                total += order.total()
        return total

    def tier(self):
        value = self.lifetime_value()
        if self.vip or value > 1000:
            return "gold"
        elif value > 100:
            return "silver"
        return "bronze"
