import sys

for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    n = int(line)
    if n > 20:
        print("OVERFLOW")
        sys.exit(8)
    fact = 1
    for i in range(1, n + 1):
        fact *= i
    print(f"{n:03d}! = {fact:019d}")
