"""SUMNUMS: sum the integers on standard input."""
import sys


def main():
    values = [int(s) for s in (l.strip() for l in sys.stdin) if s]
    print("COUNT: %05d" % len(values))
    print("TOTAL: %09d" % sum(values))


if __name__ == "__main__":
    main()
