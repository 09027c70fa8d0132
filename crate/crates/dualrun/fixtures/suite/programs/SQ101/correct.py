import os
import sys


def records(lines):
    for line in lines:
        line = line.rstrip("\n")
        if line.strip():
            name, amount = line.split(",", 1)
            yield name[:20], int(amount)


def main():
    os.makedirs("out", exist_ok=True)
    count = 0
    with open(os.path.join("out", "LEDGER.DAT"), "w") as ledger:
        for count, (name, amount) in enumerate(records(sys.stdin), start=1):
            ledger.write("%05d %-20s%09d\n" % (count, name, amount))
    print("RECORDS WRITTEN: %05d" % count)


main()
