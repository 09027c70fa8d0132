import sys


def transform(line):
    field = line.rstrip("\n")[:40].upper()
    return field.rstrip()[::-1].strip()


for raw in sys.stdin:
    print(transform(raw))
