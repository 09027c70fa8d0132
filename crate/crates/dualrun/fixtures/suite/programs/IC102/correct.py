import sys

SEP = '/'


def fmtdate(text):
    if len(text) != 8 or not text.isdigit():
        return None
    yyyy, mm, dd = text[:4], text[4:6], text[6:]
    if not (1 <= int(mm) <= 12 and 1 <= int(dd) <= 31):
        return None
    return dd + '/' + mm + '/' + yyyy


bad = 0
for line in sys.stdin:
    text = line.strip()
    if not text:
        continue
    out = fmtdate(text)
    if out is None:
        print("INVALID DATE " + text)
        bad += 1
    else:
        print(out)
sys.exit(4 if bad else 0)
