import numpy as np
import pytest

from serboot.data import Dataset, EmotionClass, LabeledSample, SoftLabel

# Collected by the acceptance tests; printed one line per criterion at the end.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def record_acceptance(name: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"{status}  {name}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


def sample(
    sample_id: str = "u0",
    features=None,
    label: EmotionClass = EmotionClass.ANGRY,
    speaker: str = "spk0",
    language: str = "tgt",
    origin: str = "target",
    soft=None,
) -> LabeledSample:
    if features is None:
        features = np.zeros((1, 4), dtype=np.float32)
    soft_label = SoftLabel(np.asarray(soft, dtype=np.float64)) if soft is not None else None
    return LabeledSample(
        id=sample_id,
        features=features,
        hard_label=label,
        speaker=speaker,
        language=language,
        origin=origin,
        soft_label=soft_label,
    )


@pytest.fixture
def tiny_dataset() -> Dataset:
    rng = np.random.default_rng(0)
    samples = [
        sample(f"u{i}", rng.normal(size=(2, 4)), EmotionClass(i % 4), speaker=f"spk{i % 3}")
        for i in range(10)
    ]
    return Dataset.from_samples(samples, name="tiny")
