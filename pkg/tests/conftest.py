import numpy as np
import pytest

from detlab import AnchorPoint, BoundingBox, GroundTruthInstance, Prediction


def make_pred(box, scores, anchor=None, stride=8.0):
    """Prediction with the anchor defaulting to the box center."""
    box = BoundingBox(*box)
    if anchor is None:
        anchor = ((box.x_min + box.x_max) / 2, (box.y_min + box.y_max) / 2)
    return Prediction(AnchorPoint(anchor[0], anchor[1], stride), box, tuple(scores))


def make_gt(box, class_id=0):
    return GroundTruthInstance(BoundingBox(*box), class_id)


def random_instance(rng, num_preds=12, num_classes=3, canvas=64.0):
    """One ground truth with jittered predictions around it.

    Boxes are sized so that most anchors stay inside the ground truth but
    some fall out, exercising the spatial prior.
    """
    w = rng.uniform(20, 30)
    h = rng.uniform(20, 30)
    x0 = rng.uniform(0, canvas - w)
    y0 = rng.uniform(0, canvas - h)
    gt_box = (x0, y0, x0 + w, y0 + h)
    class_id = int(rng.integers(0, num_classes))
    preds = []
    for _ in range(num_preds):
        noise = rng.normal(0, 0.2, 4)
        bx0 = x0 + noise[0] * w
        by0 = y0 + noise[1] * h
        bx1 = x0 + w + noise[2] * w
        by1 = y0 + h + noise[3] * h
        if bx0 > bx1:
            bx0, bx1 = bx1, bx0
        if by0 > by1:
            by0, by1 = by1, by0
        scores = rng.uniform(0.01, 1.0, num_classes)
        preds.append(make_pred((bx0, by0, bx1, by1), scores))
    return preds, [make_gt(gt_box, class_id)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
