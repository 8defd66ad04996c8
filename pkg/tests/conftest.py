import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from osskit.ingest import CropRecord, FeatureTable
from osskit.synth import ClassShift, ClassSpec, SynthSpec

FOUR_CLASSES = (
    ClassSpec("car", 0.4, 0.4, 0.2, (180, 40, 40), 12, 8, (20, 50)),
    ClassSpec("pedestrian", 0.3, -0.8, 0.2, (40, 160, 60), 12, 8, (16, 40)),
    ClassSpec("cyclist", 0.2, 0.0, 0.25, (50, 60, 170), 12, 10, (16, 40)),
    ClassSpec("truck", 0.1, 0.6, 0.2, (200, 200, 60), 12, 8, (24, 60)),
)
UNIFORM_SHIFT = tuple(ClassShift(c.name, (30, 30, 30), 0.15, 6.0, 0) for c in FOUR_CLASSES)


def four_class_spec(**kw):
    base = dict(classes=FOUR_CLASSES, n_images=60, canvas=(256, 192), objects_per_image=6, shift=UNIFORM_SHIFT)
    base.update(kw)
    return SynthSpec(**base)


def crop(pixels, class_id=0, image_id="img"):
    return CropRecord(image_id, class_id, np.asarray(pixels, dtype=np.uint8))


def solid(h, w, rgb):
    return crop(np.broadcast_to(np.asarray(rgb, dtype=np.uint8), (h, w, 3)).copy())


def gaussian_table(set_id, means, n_per_class, seed, scale=1.0, catalog=None):
    """Feature table whose class j rows are N(means[j], scale^2 I_3)."""
    rng = np.random.default_rng(seed)
    ids, rows, imgs = [], [], []
    for j, (mu, n) in enumerate(zip(means, n_per_class)):
        rows.append(rng.normal(mu, scale, size=(n, 3)))
        ids += [j] * n
        imgs += [f"{set_id}-{j}-{i // 3}" for i in range(n)]
    catalog = catalog or [f"c{j}" for j in range(len(means))]
    return FeatureTable(set_id, catalog, ["AR", "DCT", "CH"], ids, np.vstack(rows), imgs)


def write_image(path, w, h, rgb=(90, 90, 90)):
    Image.fromarray(np.full((h, w, 3), rgb, dtype=np.uint8)).save(path)


@pytest.fixture
def kitti_fixture(tmp_path):
    """Three-image KITTI-style dataset with 5 usable boxes and one DontCare."""
    labels = tmp_path / "label_2"
    images = tmp_path / "image_2"
    labels.mkdir()
    images.mkdir()
    tail = "1.5 1.6 3.9 1.2 1.8 10.0 0.1"
    files = {
        "000000": [f"Car 0.00 0 1.57 100 50 180 110 {tail}", f"Pedestrian 0.00 0 0.2 20 30 40 90 {tail}"],
        "000001": [f"Car 0.10 1 -1.2 10.5 20.2 70.7 60.9 {tail}", f"DontCare -1 -1 -10 5 5 30 30 {tail}"],
        "000002": [f"Cyclist 0.00 0 0.5 150 40 190 100 {tail}", f"Car 0.00 2 0.1 0 0 30 25 {tail}"],
    }
    for stem, lines in files.items():
        (labels / f"{stem}.txt").write_text("\n".join(lines) + "\n")
        write_image(images / f"{stem}.png", 200, 120, (60 + int(stem) * 40, 90, 120))
    return labels, images


@pytest.fixture
def coco_fixture(tmp_path):
    images = tmp_path / "imgs"
    images.mkdir()
    write_image(images / "a.png", 200, 200)
    write_image(images / "b.png", 64, 48)
    doc = {
        "images": [
            {"id": 2, "file_name": "b.png", "width": 64, "height": 48},
            {"id": 1, "file_name": "a.png", "width": 200, "height": 200},
        ],
        "annotations": [
            {"id": 1, "image_id": 1, "category_id": 3, "bbox": [10, 20, 30, 40]},
            {"id": 2, "image_id": 1, "category_id": 1, "bbox": [190, 190, 20, 20]},
            {"id": 3, "image_id": 2, "category_id": 2, "bbox": [0, 0, 3, 3]},
            {"id": 4, "image_id": 9, "category_id": 2, "bbox": [0, 0, 3, 3]},
            {"id": 5, "image_id": 2, "category_id": 7, "bbox": [0, 0, 3, 3]},
        ],
        "categories": [{"id": 3, "name": "c"}, {"id": 1, "name": "a"}, {"id": 2, "name": "b"}],
    }
    path = tmp_path / "ann.json"
    path.write_text(json.dumps(doc))
    return path, images


# -- acceptance reporting ------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[number] = (title, report.outcome, detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" | {detail}" if detail else ""))
