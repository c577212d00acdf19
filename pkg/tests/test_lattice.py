import numpy as np
import pytest

from depthseg.lattice import (
    AtomicModel,
    Column,
    ProfileKind,
    Species,
    SurfaceProfile,
    generate_model,
    model_stats,
)

SHAPE = (128, 128)
PITCH = 12.0


def _heavy_rows(model):
    """Columns grouped by grid row, surface first."""
    rows = {}
    for c in model.columns:
        if c.species is Species.HEAVY:
            rows.setdefault(c.row, []).append(c)
    return [rows[y] for y in sorted(rows)]


def test_flat_bulk_depth_constant():
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=5, wedge_rows=0)
    model = generate_model(profile, SHAPE, PITCH, seed=0)
    depths = [c.depth for c in model.columns]
    assert set(depths) == {5}
    assert np.var(depths) == 0.0


def test_flat_wedge_taper_row_by_row():
    # base 3 over a 2-row wedge: surface row 1, next 2, bulk 3
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=3, wedge_rows=2)
    model = generate_model(profile, SHAPE, PITCH, seed=0)
    expected = [1, 2] + [3] * (len(_heavy_rows(model)) - 2)
    for row, want in zip(_heavy_rows(model), expected):
        assert {c.depth for c in row} == {want}


def test_wedge_taper_matches_linear_rule():
    # independent enumeration of the taper rule for several bases
    for base in (3, 5, 8, 10):
        wedge = 4
        profile = SurfaceProfile(ProfileKind.FLAT, base_depth=base, wedge_rows=wedge)
        model = generate_model(profile, (160, 128), PITCH, seed=1)
        rows = _heavy_rows(model)
        for r, row in enumerate(rows):
            if r < wedge:
                want = max(1, int(np.floor(base * (r + 1) / (wedge + 1) + 0.5)))
            else:
                want = base
            assert {c.depth for c in row} == {want}, f"row {r} base {base}"


def test_same_seed_identical_model():
    profile = SurfaceProfile(ProfileKind.STEPPED, base_depth=6, wedge_rows=1)
    a = generate_model(profile, SHAPE, PITCH, seed=123)
    b = generate_model(profile, SHAPE, PITCH, seed=123)
    assert a.to_json_dict() == b.to_json_dict()
    c = generate_model(profile, SHAPE, PITCH, seed=124)
    assert a.to_json_dict() != c.to_json_dict()


def test_sawtooth_alternates_on_surface_row():
    profile = SurfaceProfile(ProfileKind.SAWTOOTH, base_depth=5, wedge_rows=0)
    model = generate_model(profile, SHAPE, PITCH, seed=7)
    surface = sorted(_heavy_rows(model)[0], key=lambda c: c.col)
    deltas = [c.depth - 5 for c in surface]
    assert set(deltas) == {-1, 1}
    assert all(deltas[i] == -deltas[i + 1] for i in range(len(deltas) - 1))
    # bulk unaffected
    assert {c.depth for c in _heavy_rows(model)[1]} == {5}


def test_stepped_drops_once_along_surface_row():
    profile = SurfaceProfile(ProfileKind.STEPPED, base_depth=4, wedge_rows=0)
    model = generate_model(profile, SHAPE, PITCH, seed=3)
    surface = sorted(_heavy_rows(model)[0], key=lambda c: c.col)
    depths = [c.depth for c in surface]
    drops = [i for i in range(1, len(depths)) if depths[i] != depths[i - 1]]
    assert len(drops) == 1
    assert depths[drops[0]] == depths[drops[0] - 1] - 1


def test_columns_inside_bounds_and_distinct_pixels():
    profile = SurfaceProfile(ProfileKind.SAWTOOTH, base_depth=8, wedge_rows=3)
    model = generate_model(profile, (96, 160), PITCH, seed=9)
    model.validate()  # raises on violation
    h, w = model.image_shape
    assert all(0 <= c.row < h and 0 <= c.col < w for c in model.columns)


def test_light_sublattice_at_quarter_pitch():
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=5, wedge_rows=1)
    model = generate_model(profile, SHAPE, PITCH, seed=2)
    heavy = [c for c in model.columns if c.species is Species.HEAVY]
    light = np.array([(c.row, c.col) for c in model.columns if c.species is Species.LIGHT])
    assert len(light) > 0
    for c in heavy:
        d = np.sqrt((light[:, 0] - c.row) ** 2 + (light[:, 1] - c.col) ** 2)
        assert np.isclose(np.min(d), PITCH / 4.0)


def test_occupancy_scales_light_depth():
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=6, wedge_rows=0)
    model = generate_model(profile, SHAPE, PITCH, seed=0, occupancy=0.5)
    light_depths = {c.depth for c in model.columns if c.species is Species.LIGHT}
    assert light_depths == {3}
    heavy_depths = {c.depth for c in model.columns if c.species is Species.HEAVY}
    assert heavy_depths == {6}


def test_too_small_image_rejected():
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=3)
    with pytest.raises(ValueError, match="2x2"):
        generate_model(profile, (20, 128), PITCH, seed=0)


def test_small_pitch_rejected():
    profile = SurfaceProfile(ProfileKind.FLAT, base_depth=3)
    with pytest.raises(ValueError, match="pitch"):
        generate_model(profile, SHAPE, 2.0, seed=0)


def test_stats_simple_and_empty():
    cols = [Column(row=10.0, col=10.0 + 5 * i, species=Species.HEAVY, depth=5) for i in range(10)]
    st = model_stats(AtomicModel(columns=cols, lattice_pitch_px=5.0, image_shape=(64, 64)))
    assert st.n_columns == 10
    assert st.depth_histogram[5] == 10
    assert st.depth_histogram.sum() == 10

    empty = model_stats(AtomicModel(columns=[], lattice_pitch_px=5.0, image_shape=(64, 64)))
    assert empty.n_columns == 0
    assert empty.depth_histogram.sum() == 0


def test_stats_match_brute_force_recount(rng):
    for trial in range(10):
        profile = SurfaceProfile(
            ProfileKind(rng.choice(["flat", "sawtooth", "stepped"])),
            base_depth=int(rng.integers(3, 11)),
            wedge_rows=int(rng.integers(0, 4)),
        )
        model = generate_model(profile, SHAPE, PITCH, seed=int(rng.integers(1 << 31)))
        st = model_stats(model)
        # independent recount
        by_depth = {}
        by_species = {"heavy": 0, "light": 0}
        for c in model.columns:
            by_depth[c.depth] = by_depth.get(c.depth, 0) + 1
            by_species[c.species.value] += 1
        assert st.species_counts == by_species
        for d, n in by_depth.items():
            assert st.depth_histogram[d] == n
        assert st.depth_histogram.sum() == len(model.columns)


def test_json_round_trip(tmp_path):
    profile = SurfaceProfile(ProfileKind.SAWTOOTH, base_depth=7, wedge_rows=2)
    model = generate_model(profile, SHAPE, PITCH, seed=77)
    path = model.save(tmp_path / "model.json")
    back = AtomicModel.load(path)
    assert back.to_json_dict() == model.to_json_dict()


def test_depth_cap_clamps_everything():
    profile = SurfaceProfile(ProfileKind.SAWTOOTH, base_depth=10, wedge_rows=0)
    model = generate_model(profile, SHAPE, PITCH, seed=5, depth_cap=5)
    assert max(c.depth for c in model.columns) <= 5
