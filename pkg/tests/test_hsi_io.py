import json
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.errors import (ConfigurationError, CubeFormatError, CubeIOError, SizeMismatchError,
                             UnsupportedOrderError)
from src.core.metrics import frobenius_norm
from src.dataset.cube_io import (CubeHeader, load_cube, read_header, read_matrix_csv, read_tensor_csv,
                                 read_trace_csv, save_cube, write_matrix_csv, write_tensor_csv,
                                 write_trace_csv)
from src.dataset.synthetic import SyntheticCubeSpec, synth_cube, synth_kruskal_cube
from src.tensor.base import unfold


def cube_paths(tmp_path):
    return str(tmp_path / 'cube.json'), str(tmp_path / 'cube.bsq')


def test_float64_round_trip_is_bit_exact(tmp_path, rng):
    t = rng.standard_normal((2, 2, 3))
    header_path, data_path = cube_paths(tmp_path)
    save_cube(t, header_path, data_path)
    loaded, header = load_cube(header_path, data_path)
    assert_array_equal(loaded, t)
    assert loaded.dtype == np.float64
    assert (header.height, header.width, header.bands) == (2, 2, 3)


def test_float32_round_trip_after_widening(tmp_path, rng):
    t = rng.standard_normal((3, 4, 2)).astype(np.float32).astype(np.float64)
    header_path, data_path = cube_paths(tmp_path)
    save_cube(t, header_path, data_path, dtype='f32')
    loaded, header = load_cube(header_path, data_path)
    assert header.dtype == 'f32'
    assert_array_equal(loaded, t)
    assert os.path.getsize(data_path) == t.size * 4


def test_band_sequential_layout(tmp_path):
    # band 1 plane row-major, then band 2
    header_path, data_path = cube_paths(tmp_path)
    with open(header_path, 'w') as f:
        json.dump({'width': 3, 'height': 2, 'bands': 2, 'dtype': 'f64', 'interleave': 'bsq'}, f)
    np.arange(12, dtype='<f8').tofile(data_path)
    cube, _ = load_cube(header_path, data_path)
    assert cube.shape == (2, 3, 2)
    assert_array_equal(cube[:, :, 0], [[0, 1, 2], [3, 4, 5]])
    assert_array_equal(cube[:, :, 1], [[6, 7, 8], [9, 10, 11]])
    assert_array_equal(cube[1, 2, :], [5, 11])


def test_size_mismatch(tmp_path):
    header_path, data_path = cube_paths(tmp_path)
    with open(header_path, 'w') as f:
        json.dump({'width': 2, 'height': 2, 'bands': 3, 'dtype': 'f64', 'interleave': 'bsq'}, f)
    np.zeros(8, dtype='<f8').tofile(data_path)
    with pytest.raises(SizeMismatchError):
        load_cube(header_path, data_path)


def test_all_zero_payload(tmp_path):
    header_path, data_path = cube_paths(tmp_path)
    save_cube(np.zeros((2, 3, 4)), header_path, data_path)
    cube, _ = load_cube(header_path, data_path)
    assert frobenius_norm(cube) == 0


def test_header_validation(tmp_path):
    with pytest.raises(CubeFormatError):
        CubeHeader(width=2, height=2, bands=3, dtype='i16')
    with pytest.raises(CubeFormatError):
        CubeHeader(width=0, height=2, bands=3)
    with pytest.raises(CubeFormatError):
        CubeHeader(width=2, height=2, bands=3, interleave='bip')
    with pytest.raises(CubeFormatError):
        CubeHeader(width=2, height=2, bands=3, wavelengths_um=[0.4, 0.5])
    with pytest.raises(CubeFormatError):
        CubeHeader(width=2, height=2, bands=3, wavelengths_um=[0.4, 0.4, 0.5])

    header_path = str(tmp_path / 'broken.json')
    with open(header_path, 'w') as f:
        f.write('{"width": 2,')
    with pytest.raises(CubeFormatError):
        read_header(header_path)
    with pytest.raises(CubeIOError):
        read_header(str(tmp_path / 'missing.json'))


def test_wavelengths_round_trip(tmp_path, rng):
    header_path, data_path = cube_paths(tmp_path)
    save_cube(rng.random((2, 2, 3)), header_path, data_path, wavelengths_um=[0.4, 0.9, 2.1])
    assert read_header(header_path).wavelengths_um == (0.4, 0.9, 2.1)
    with open(header_path) as f:
        assert json.load(f)['wavelengths_um'] == [0.4, 0.9, 2.1]


def test_save_errors(tmp_path):
    with pytest.raises(UnsupportedOrderError):
        save_cube(np.zeros((2, 3)), *cube_paths(tmp_path))
    missing = tmp_path / 'no' / 'such' / 'dir'
    with pytest.raises(CubeIOError) as exc:
        save_cube(np.zeros((2, 2, 2)), str(missing / 'c.json'), str(missing / 'c.bsq'))
    assert 'c.json' in str(exc.value)


def test_tensor_csv(tmp_path, rng):
    path = str(tmp_path / 'core.csv')
    t = rng.standard_normal((2, 3, 2))
    write_tensor_csv(t, path)
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines[0] == 'dims: 2,3,2'
    assert lines[1].startswith('1,1,1,') and lines[2].startswith('2,1,1,')
    assert_array_equal(read_tensor_csv(path), t)

    sparse = str(tmp_path / 'sparse.csv')
    with open(sparse, 'w') as f:
        f.write('dims: 2,2,2\n2,2,2,5.5\n')
    expected = np.zeros((2, 2, 2))
    expected[1, 1, 1] = 5.5
    assert_array_equal(read_tensor_csv(sparse), expected)

    with open(sparse, 'w') as f:
        f.write('dims: 2,2,2\n3,1,1,1.0\n')
    with pytest.raises(CubeFormatError):
        read_tensor_csv(sparse)


def test_matrix_and_trace_csv(tmp_path, rng):
    m = rng.standard_normal((4, 3))
    path = str(tmp_path / 'factor.csv')
    write_matrix_csv(m, path)
    assert_array_equal(read_matrix_csv(path), m)

    trace_path = str(tmp_path / 'trace.csv')
    residuals = [3.0, 1.5, 1.25e-3]
    write_trace_csv(residuals, trace_path)
    with open(trace_path) as f:
        assert f.readline().strip() == 'iteration,residual'
    assert read_trace_csv(trace_path) == residuals


def test_synthetic_spec_validation():
    with pytest.raises(ConfigurationError):
        SyntheticCubeSpec(dims=(4, 4, 4), num_endmembers=0)
    with pytest.raises(ConfigurationError):
        SyntheticCubeSpec(dims=(4, 4, 4), num_endmembers=2, noise_sigma=-1.0)
    with pytest.raises(ConfigurationError):
        SyntheticCubeSpec(dims=(4, 4), num_endmembers=2)


def test_single_endmember_cube():
    generated = synth_cube(SyntheticCubeSpec(dims=(8, 6, 10), num_endmembers=1))
    assert generated.cube.shape == (6, 8, 10)
    assert_allclose(generated.abundances, 1.0)
    s = np.linalg.svd(unfold(generated.cube, 2), compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_mixing_cube_rank_and_abundances():
    generated = synth_cube(SyntheticCubeSpec(dims=(16, 16, 32), num_endmembers=3, seed=4))
    assert np.all(generated.abundances >= 0)
    assert_allclose(generated.abundances.sum(axis=-1), 1.0, atol=1e-12)
    assert np.all(generated.endmembers > 0)
    assert generated.endmembers.shape == (32, 3)
    assert np.all(np.diff(generated.wavelengths_um) > 0)
    s = np.linalg.svd(unfold(generated.cube, 2), compute_uv=False)
    assert np.all(s[3:] < 1e-10 * s[0])


def test_noise_level_over_seeds():
    for seed in range(5):
        clean = synth_cube(SyntheticCubeSpec(dims=(16, 16, 32), num_endmembers=3, seed=seed)).cube
        noisy = synth_cube(SyntheticCubeSpec(dims=(16, 16, 32), num_endmembers=3, seed=seed, noise_sigma=0.01)).cube
        measured = frobenius_norm(noisy - clean) / frobenius_norm(clean)
        expected = 0.01 * np.sqrt(clean.size) / frobenius_norm(clean)
        assert expected / 1.5 <= measured <= expected * 1.5


def test_generation_is_deterministic():
    spec = SyntheticCubeSpec(dims=(5, 4, 6), num_endmembers=2, seed=9, noise_sigma=0.1)
    assert_array_equal(synth_cube(spec).cube, synth_cube(spec).cube)
    cube_a, truth_a = synth_kruskal_cube(spec)
    cube_b, _ = synth_kruskal_cube(spec)
    assert_array_equal(cube_a, cube_b)
    assert truth_a.shape == (4, 5, 6) and truth_a.rank == 2
