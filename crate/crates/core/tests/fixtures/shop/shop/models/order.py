from shop.models.product import Entity


class OrderLine:
    def __init__(self, product, quantity):
        self.product = product
        self.quantity = quantity

    def subtotal(self):
        return self.product.price * self.quantity


class Order(Entity):
    def __init__(self, ident, customer):
        super().__init__(ident)
        self.customer = customer
        self.lines = []
        self.paid = False

    def add(self, product, quantity=1):
        if quantity <= 0:
            raise ValueError("quantity must be positive")
        for line in self.lines:
            if line.product.key() == product.key():
                line.quantity += quantity
                return line
        line = OrderLine(product, quantity)
        self.lines.append(line)
        return line

    def total(self):
        return sum(line.subtotal() for line in self.lines)

    def weight(self):
        return sum(l.product.weight * l.quantity for l in self.lines)

    def mark_paid(self):
        self.paid = True
