"""Independent reference implementations used only by the tests.

They follow the textbook definitions literally (Python sets of shots and
frames) and share no code with the package.
"""
import math
import statistics


def scene_sets(starts, n):
    ends = list(starts[1:]) + [n]
    return [set(range(lo, hi)) for lo, hi in zip(starts, ends)]


def coverage_overflow(gt_starts, det_starts, n):
    gt = scene_sets(gt_starts, n)
    det = scene_sets(det_starts, n)
    cov = 0.0
    ovf = 0.0
    for t, g in enumerate(gt):
        c_t = max(len(s & g) for s in det) / len(g)
        num = sum(len(s - g) * min(1, len(s & g)) for s in det)
        den = (len(gt[t - 1]) if t > 0 else 0) + (len(gt[t + 1]) if t + 1 < len(gt) else 0)
        if den == 0:
            o_t = 0.0 if num == 0 else 1.0
        else:
            o_t = min(1.0, num / den)
        cov += c_t * len(g) / n
        ovf += o_t * len(g) / n
    f = 0.0 if cov + (1 - ovf) == 0 else 2 * cov * (1 - ovf) / (cov + 1 - ovf)
    return cov, ovf, f


def m_iou(gt_starts, det_starts, lengths):
    n = len(lengths)
    frames_of = []
    pos = 0
    for length in lengths:
        frames_of.append(set(range(pos, pos + length)))
        pos += length

    def frames(scene):
        out = set()
        for k in scene:
            out |= frames_of[k]
        return out

    gt = [frames(s) for s in scene_sets(gt_starts, n)]
    det = [frames(s) for s in scene_sets(det_starts, n)]

    def iou(a, b):
        return len(a & b) / len(a | b)

    a = sum(max(iou(g, d) for d in det) for g in gt) / len(gt)
    b = sum(max(iou(g, d) for g in gt) for d in det) / len(det)
    return (a + b) / 2


def silverman(sample):
    m = len(sample)
    sd = statistics.stdev(sample)
    q1, _, q3 = statistics.quantiles(sample, n=4, method="inclusive")
    iqr = q3 - q1
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 1.06 * spread * m ** (-0.2)


def relu_layer(weights, bias, x):
    out = []
    for row, b in zip(weights, bias):
        acc = b
        for w, v in zip(row, x):
            acc += w * v
        out.append(max(acc, 0.0))
    return out


def euclid(a, b):
    return math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
