#!/usr/bin/env python3
"""Naive standalone reimplementation of the selection pipeline.

Shares no code with the C++ library. Run once to (re)generate the frozen
oracle files under tests/fixtures/; review diffs by hand before committing.

    python3 tests/oracle/miwv_oracle.py tests/fixtures
"""
import json
import math
import random
import struct
import sys
from pathlib import Path

MASK = (1 << 64) - 1

WITH_INPUT = ("Below is an instruction that describes a task, paired with an input that "
              "provides further context. Write a response that appropriately completes "
              "the request.\n\n### Instruction:\n{instruction}\n\n### Input:\n{input}\n\n"
              "### Response:\n")
NO_INPUT = ("Below is an instruction that describes a task. Write a response that "
            "appropriately completes the request.\n\n### Instruction:\n{instruction}\n\n"
            "### Response:\n")
SEPARATOR = "\n\n"
RATIOS = [0.25, 0.5]


def fnv1a64(data: bytes) -> int:
    h = 0xcbf29ce484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001b3) & MASK
    return h


def render(sample):
    # split on the slots first so braces inside sample text are never re-read
    inp = sample.get("input")
    if inp:
        head, rest = WITH_INPUT.split("{instruction}")
        mid, tail = rest.split("{input}")
        return head + sample["instruction"] + mid + inp + tail
    head, tail = NO_INPUT.split("{instruction}")
    return head + sample["instruction"] + tail


def render_one_shot(example, target):
    return render(example) + example["output"] + SEPARATOR + render(target)


def to_f32(x: float) -> float:
    return struct.unpack("<f", struct.pack("<f", x))[0]


def hash_embed(text: str, dim: int = 256):
    data = text.encode("utf-8")
    windows = [data] if len(data) < 3 else [data[p:p + 3] for p in range(len(data) - 2)]
    counts = [0] * dim
    for w in windows:
        h = fnv1a64(w)
        counts[h % dim] += -1 if (h >> 63) & 1 else 1
    norm = math.sqrt(sum(float(c) * float(c) for c in counts))
    return [to_f32(c / norm) for c in counts]


def unit(row):
    acc = 0.0
    for v in row:
        acc += v * v
    norm = math.sqrt(acc)
    if norm == 0.0:
        return [0.0] * len(row)
    return [v / norm for v in row]


def lane_dot(a, b):
    # eight interleaved partial sums, combined pairwise
    lanes = [0.0] * 8
    for c in range(len(a)):
        lanes[c % 8] += a[c] * b[c]
    return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))


def neighbors(rows):
    units = [unit(r) for r in rows]
    out = []
    for i in range(len(units)):
        sims = {}
        for j in range(len(units)):
            if j == i:
                continue
            s = lane_dot(units[i], units[j])
            sims[j] = max(-1.0, min(1.0, s))
        best = max(sims.values())
        k = min(j for j, s in sims.items() if s == best)
        ties = sum(1 for s in sims.values() if abs(s - best) <= 1e-9)
        out.append((i, k, sims[k], ties))
    return out


def hash_mock_logprobs(text: str):
    data = text.encode("utf-8")
    return [-(1 + (fnv1a64(data[:p + 1]) % 1000) / 1000) for p in range(len(data))]


def loss(prompt: str, response: str):
    lps = hash_mock_logprobs(prompt + response)
    span = lps[len(prompt.encode("utf-8")):]
    total = 0.0
    for lp in span:
        total += -lp
    return total / len(span), len(span)


def fmt(x: float) -> str:
    return repr(x)


def main(out_dir: Path):
    samples = [json.loads(line) for line in (out_dir / "fixture20.jsonl").read_text("utf-8").splitlines() if line.strip()]

    (out_dir / "oracle_oneshot_3_11.txt").write_bytes(render_one_shot(samples[3], samples[11]).encode("utf-8"))

    rows = [hash_embed(render(s)) for s in samples]
    nmap = neighbors(rows)
    with open(out_dir / "oracle_neighbors.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for i, k, sim, ties in nmap:
            f.write('{"i":%d,"k":%d,"sim":%s,"ties":%d}\n' % (i, k, fmt(sim), ties))

    records = []
    with open(out_dir / "oracle_scores.jsonl", "w", encoding="utf-8", newline="\n") as f:
        for i, k, sim, _ in nmap:
            lu, au = loss(render(samples[i]), samples[i]["output"])
            lc, ac = loss(render_one_shot(samples[k], samples[i]), samples[i]["output"])
            miwv = lc - lu
            records.append((i, miwv))
            f.write('{"i":%d,"k":%d,"sim":%s,"loss":%s,"loss_cond":%s,"A":%d,"A_cond":%d,"miwv":%s,"truncated":false}\n'
                    % (i, k, fmt(sim), fmt(lu), fmt(lc), au, ac, fmt(miwv)))

    ranked = [i for i, _ in sorted(records, key=lambda r: (-r[1], r[0]))]
    for ratio in RATIOS:
        count = math.floor(ratio * len(ranked))
        with open(out_dir / ("oracle_subset_%s.jsonl" % ratio), "w", encoding="utf-8", newline="\n") as f:
            for i in ranked[:count]:
                s = samples[i]
                rec = {"instruction": s["instruction"]}
                if "input" in s:
                    rec["input"] = s["input"]
                rec["output"] = s["output"]
                f.write(json.dumps(rec, ensure_ascii=False, separators=(",", ":")) + "\n")

    # shortest round-trip float formatting vectors
    rng = random.Random(20241016)
    lines = []
    specials = [0.0, -0.0, 1.0, -1.0, 0.5, 0.1, 1e-4, 1e-5, 0.0001234, 123456789012345.0,
                1234567890123456.0, 1e16, 1.5e16, 1e22, 5e-324, 1.7976931348623157e308,
                2.7725887222397811, 100.0, 3182.75, 1e-7, 9.999999999999999e15]
    for x in specials:
        lines.append("%016x %s" % (struct.unpack("<Q", struct.pack("<d", x))[0], repr(x)))
    for _ in range(2000):
        bits = rng.getrandbits(64)
        x = struct.unpack("<d", struct.pack("<Q", bits))[0]
        if math.isnan(x) or math.isinf(x):
            continue
        lines.append("%016x %s" % (bits, repr(x)))
    for _ in range(2000):
        x = rng.uniform(-3, 3) * 10 ** rng.randint(-8, 18)
        lines.append("%016x %s" % (struct.unpack("<Q", struct.pack("<d", x))[0], repr(x)))
    (out_dir / "oracle_double_repr.txt").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main(Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"))
