# complexity: 8
def scan(grid, target):
    found = None
    for row in grid:
        for cell in row:
            if cell == target:
                found = cell
                break
            elif cell is None:
                continue
        else:
            continue
        break
    while found is not None and found > 0:
        found -= 1
    return found or 0
