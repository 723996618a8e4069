from shop.models.product import Product
from shop.models.customer import Customer
from shop.models.order import Order, OrderLine
