import sys


def main():
    vals = [int(l) for l in sys.stdin if l.strip()]
    if not vals:
        print("NO DATA")
        return
    print("MAX %06d" % max(vals))
    print("MIN %06d" % min(vals))
    whole, frac = divmod(sum(vals) * 100 // len(vals), 100)
    print("MEAN%6d.%02d" % (whole, frac))


main()
