"""Deliberately naive metric implementations used as independent references."""


def brute_f_score(preds, labels, threshold=0.5):
    tp = fp = fn = 0
    for p, y in zip(preds, labels):
        if p >= threshold and y == 1:
            tp += 1
        elif p >= threshold:
            fp += 1
        elif y == 1:
            fn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return 2 * precision * recall / (precision + recall) if precision + recall else 0.0


def brute_average_precision(scores, labels):
    """Precision at every positive, where item j ranks at or above i if it scores higher or ties at a lower index."""
    total, n_pos = 0.0, 0
    for i, (s, y) in enumerate(zip(scores, labels)):
        if y != 1:
            continue
        n_pos += 1
        above = [j for j, t in enumerate(scores) if t > s or (t == s and j <= i)]
        total += sum(labels[j] == 1 for j in above) / len(above)
    return total / n_pos
