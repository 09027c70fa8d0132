import sys

values = [int(l) for l in sys.stdin if l.strip()]
print("COUNT: %5d" % len(values))
print("TOTAL: %09d" % sum(values))
