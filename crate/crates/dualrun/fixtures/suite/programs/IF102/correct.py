import sys

for line in sys.stdin:
    text = line.rstrip("\n")[:30].strip()
    if text:
        print("LEN=%02d UP=%s REV=%s" % (len(text), text.upper(), text[::-1]))
