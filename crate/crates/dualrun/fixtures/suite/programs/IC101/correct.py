import sys
from decimal import Decimal, ROUND_HALF_UP


def taxcalc(amount):
    tax = (Decimal(amount) * 7 / 100).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return int(tax)


def main():
    for line in sys.stdin:
        if line.strip():
            amount = int(line)
            print("%09d TAX %09d" % (amount, taxcalc(amount)))


main()
