import sys

count = 0
total = 0
for line in sys.stdin:
    line = line.strip()
    if not line:
        continue
    total += int(line)
    count += 1
print(f"COUNT: {count:05d}")
print(f"TOTAL: {total:09d}")
