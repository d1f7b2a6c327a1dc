import re

SEPARATOR = '-'


def normalize(text):
    """Lower-case and collapse separators."""
    return re.sub(r'[\s_]+', SEPARATOR, text.strip().lower())


class Registry:
    """Name to value store."""

    def __init__(self):
        self.items = {}

    def add(self, name, value):
        self.items[normalize(name)] = value

    def get(self, name, default=None):
        return self.items.get(normalize(name), default)
