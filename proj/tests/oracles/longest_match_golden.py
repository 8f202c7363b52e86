"""Brute-force longest-match count for the fixture paragraph: at every
position try every vocabulary entry and take the longest one that matches
(one byte when none does). Prints the count that the unit test freezes."""
import sys

ESC = {"n": "\n", "t": "\t", "s": " ", "\\": "\\"}


def unescape(line):
    out, i = [], 0
    while i < len(line):
        if line[i] == "\\":
            out.append(ESC[line[i + 1]])
            i += 2
        else:
            out.append(line[i])
            i += 1
    return "".join(out).encode()


def main(vocab_path, text_path):
    vocab = [unescape(l.rstrip("\n")) for l in open(vocab_path, encoding="utf-8") if l.rstrip("\n")]
    text = open(text_path, "rb").read()
    i = n = 0
    while i < len(text):
        best = max((len(v) for v in vocab if text.startswith(v, i)), default=0)
        i += best or 1
        n += 1
    print(n)


if __name__ == "__main__":
    main(*sys.argv[1:])
