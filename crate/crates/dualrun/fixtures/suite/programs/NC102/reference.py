import sys

for line in sys.stdin:
    text = line.rstrip("\n")[:40].upper().rstrip()
    print(text[::-1].strip())
