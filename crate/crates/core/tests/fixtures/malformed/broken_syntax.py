class Half(
    def method(self):
        pass
