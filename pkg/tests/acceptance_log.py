"""Collects the PASS/FAIL lines of the acceptance suite for the terminal summary."""
LINES = []


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} ({detail})"
    LINES.append(line)
    print(line, flush=True)
    return ok
