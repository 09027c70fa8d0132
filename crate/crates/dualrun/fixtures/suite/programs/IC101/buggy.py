import sys


def taxcalc(amount):
    return amount * 7 // 100


for line in sys.stdin:
    if line.strip():
        amount = int(line)
        print(f"{amount:09d} TAX {taxcalc(amount):09d}")
