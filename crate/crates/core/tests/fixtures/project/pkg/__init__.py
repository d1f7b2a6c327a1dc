from .util import normalize as normalize_name
from .sub.limits import MAX_ITEMS

__all__ = ['normalize_name', 'MAX_ITEMS']
