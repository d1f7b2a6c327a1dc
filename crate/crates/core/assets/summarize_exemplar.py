def parse_duration(text: str) -> int:
    """Convert strings like '1h30m' or '45s' into seconds."""
    units = {'h': 3600, 'm': 60, 's': 1}
    total, digits = 0, ''
    for ch in text.strip():
        if ch.isdigit():
            digits += ch
        elif ch in units and digits:
            total += int(digits) * units[ch]
            digits = ''
        else:
            raise ValueError('bad duration: %r' % text)
    if digits:
        raise ValueError('missing unit in %r' % text)
    return total
