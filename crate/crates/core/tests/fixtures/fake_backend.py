#!/usr/bin/env python3
"""Scripted stand-in for a model server speaking the stdio JSON-lines protocol.

Usage: fake_backend.py [--log PATH] [--fail-op OP] [--fail-after N]

Generator ops: fine_tune, synthesize. Classifier ops: train, predict.
Masks in a synthesize input are filled with "filled"; an auto-regressive
prompt ("label SEP ...") is completed with two words and EOS. --fail-op
answers {"ok": false} to OP once it has been seen N times (default 0).
"""

import argparse
import json
import sys


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--log")
    ap.add_argument("--fail-op")
    ap.add_argument("--fail-after", type=int, default=0)
    args = ap.parse_args()

    log = open(args.log, "a") if args.log else None
    seen = {}
    labels = []
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        msg = json.loads(line)
        op = msg.get("op")
        seen[op] = seen.get(op, 0) + 1
        if log:
            log.write(json.dumps(msg, sort_keys=True) + "\n")
            log.flush()
        if op == args.fail_op and seen[op] > args.fail_after:
            reply = {"ok": False, "error": "scripted failure"}
        elif op == "fine_tune":
            reply = {"ok": True}
        elif op == "synthesize":
            words = msg["input"].split()
            if len(words) >= 2 and words[1] == "SEP":
                text = " ".join(words + ["more", "words", "EOS"])
            else:
                text = " ".join("filled" if w == "<mask>" else w for w in words)
            reply = {"ok": True, "text": text}
        elif op == "train":
            labels = sorted({ex["label"] for ex in msg["train"]})
            reply = {"ok": True}
        elif op == "predict":
            reply = {"ok": True, "labels": [labels[0] for _ in msg["texts"]]}
        else:
            reply = {"ok": False, "error": "unknown op %r" % op}
        sys.stdout.write(json.dumps(reply) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    main()
