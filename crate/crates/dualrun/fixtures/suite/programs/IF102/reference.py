import sys

for line in sys.stdin:
    text = line.rstrip("\n")[:30].strip()
    if text:
        print(f"LEN={len(text):02d} UP={text.upper()} REV={text[::-1]}")
