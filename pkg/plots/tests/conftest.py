import pytest

METHODS = ("avg", "worst", "avar", "ref")


def write_artifact_pair(directory, n_scenarios=5, n_steps=8, methods=METHODS):
    """Synthesize final_state.csv and controls.csv in the documented layout."""
    directory.mkdir(parents=True, exist_ok=True)
    final = ["theta," + ",".join(f"overlap_{m}" for m in methods)]
    for i in range(n_scenarios):
        theta = -0.5 + i / max(1, n_scenarios - 1)
        row = [repr(theta)] + [repr(0.5 + 0.1 * k + 0.01 * i) for k in range(len(methods))]
        final.append(",".join(row))
    (directory / "final_state.csv").write_text("\n".join(final) + "\n")

    controls = ["t," + ",".join(f"u_{m}" for m in methods)]
    for j in range(n_steps):
        t = 0.25 * j
        row = [repr(t)] + [repr(0.2 * k - 0.05 * j) for k in range(len(methods))]
        controls.append(",".join(row))
    (directory / "controls.csv").write_text("\n".join(controls) + "\n")
    return directory


@pytest.fixture
def artifact_dir(tmp_path):
    return write_artifact_pair(tmp_path / "run")
