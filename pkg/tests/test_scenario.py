import pytest

from densepos.scenario import ScenarioError, load_checkpoints, load_scenario


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_file_gets_protocol_defaults(scenario_dir):
    sc = load_scenario(scenario_dir / "minimal.toml")
    p = sc.protocol
    assert (p.t_target, p.max_reorg_depth, p.k, p.a) == (120, 1000, 1000, "0.07537578")
    assert p.slots_per_epoch == 432_000
    assert p.min_pledge is None  # resolved to 0.01% of supply by the ledger
    assert sc.network.delta == 0
    assert sc.name == "minimal"


def test_every_shipped_scenario_loads(scenario_dir):
    for path in sorted(scenario_dir.glob("*.toml")):
        load_scenario(path)


def test_negative_delta_rejected_with_line(tmp_path):
    p = write(tmp_path, '[network]\ndelta = -1\n\n[[agents]]\nid = "a"\npledge = 50000\n')
    with pytest.raises(ScenarioError, match=r"s\.toml:2: network\.delta"):
        load_scenario(p)


def test_unknown_key_rejected_with_line(tmp_path):
    p = write(tmp_path, '[protocol]\nt_target = 10\nalhpa = 0.1\n')
    with pytest.raises(ScenarioError, match=r"s\.toml:3: unknown key protocol\.alhpa"):
        load_scenario(p)


def test_unknown_strategy(tmp_path):
    p = write(tmp_path, '[[agents]]\nid = "a"\npledge = 50000\nstrategy = "sneaky"\n')
    with pytest.raises(ScenarioError, match="strategy"):
        load_scenario(p)


def test_stake_over_supply(tmp_path):
    p = write(tmp_path, '[protocol]\ntotal_supply = 100\n\n[[agents]]\nid = "a"\npledge = 101\n')
    with pytest.raises(ScenarioError, match="exceed total supply"):
        load_scenario(p)


def test_empty_seeds(tmp_path):
    p = write(tmp_path, '[run]\nseeds = []\n\n[[agents]]\nid = "a"\npledge = 50000\n')
    with pytest.raises(ScenarioError, match="seeds"):
        load_scenario(p)


def test_bad_toml(tmp_path):
    with pytest.raises(ScenarioError, match="s.toml"):
        load_scenario(write(tmp_path, "[protocol\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "nope.toml")


def test_float_alpha_kept_as_decimal(tmp_path):
    p = write(tmp_path, '[protocol]\nalpha = 0.1\n\n[[agents]]\nid = "a"\npledge = 50000\n')
    assert load_scenario(p).protocol.alpha == "0.1"


def test_checkpoint_file_relative_to_scenario(tmp_path):
    (tmp_path / "cp.txt").write_text("# height id\n5 " + "ab" * 32 + "\n")
    p = write(tmp_path, '[run]\ncheckpoints = "cp.txt"\n\n[[agents]]\nid = "a"\npledge = 50000\n')
    assert load_scenario(p).checkpoints == {5: bytes.fromhex("ab" * 32)}


def test_checkpoint_malformed_hex_reports_location(tmp_path):
    cp = tmp_path / "cp.txt"
    cp.write_text("1 " + "ab" * 32 + "\n2 zz12\n")
    with pytest.raises(ScenarioError, match=r"cp\.txt:2: malformed block id hex"):
        load_checkpoints(cp)


@pytest.mark.parametrize("line, msg", [("x ab", "bad height"), ("-1 ab", ">= 0"), ("1", "expected"), ("1 ab\n1 cd", "duplicate")])
def test_checkpoint_line_errors(tmp_path, line, msg):
    cp = tmp_path / "cp.txt"
    cp.write_text(line + "\n")
    with pytest.raises(ScenarioError, match=msg):
        load_checkpoints(cp)


def test_missing_checkpoint_file(tmp_path):
    p = write(tmp_path, '[run]\ncheckpoints = "none.txt"\n\n[[agents]]\nid = "a"\npledge = 50000\n')
    with pytest.raises(ScenarioError, match="cannot read checkpoint"):
        load_scenario(p)


def test_fork_choice_needs_known_parent(tmp_path):
    text = 'kind = "fork_choice"\n\n[[fork_choice.chains]]\nname = "B"\nparent = "A"\nslots = [1]\n'
    with pytest.raises(ScenarioError, match="parent"):
        load_scenario(write(tmp_path, text))
