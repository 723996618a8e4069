from dataclasses import dataclass


class Entity:
    def __init__(self, ident):
        self.ident = ident

    def key(self):
        return self.ident


class Product(Entity):
    def __init__(self, ident, name, price, weight=0.0):
        super().__init__(ident)
        self.name = name
        self.price = price
        self.weight = weight

    def is_heavy(self):
        return self.weight > 20 or self.name.endswith("XL")

    def describe(self):
        # TODO: localise the description
        return "%s (%s)" % (self.name, self.price)


class DigitalProduct(Product):
    def is_heavy(self):
        return False

    @property
    def download_url(self):
        return "https://example.invalid/" + str(self.key())
