import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from pnpdepth.errors import ConfigurationError
from scenes.generator import SceneParams, generate
from sparsity.lidar import (
    LIDAR_SCENE_PARAMS, CameraIntrinsics, coverage_by_preset, coverage_ordering, get_preset, sample_lidar,
)
from sparsity.sampling import SparseDepth, default_sample_count, percent_samples, sample_uniform


class UniformSamplingTests(SimpleTestCase):

    def setUp(self):
        self.scene = generate(0)

    def test_exact_count_and_values(self):
        sparse = sample_uniform(self.scene.depth, 31, seed=4)
        self.assertEqual(sparse.count, 31)
        mask = sparse.mask.data > 0
        np.testing.assert_array_equal(sparse.values.data[mask], self.scene.depth.data[mask])
        self.assertFalse(sparse.values.data[~mask].any())

    def test_seeded(self):
        a = sample_uniform(self.scene.depth, 50, seed=9)
        b = sample_uniform(self.scene.depth, 50, seed=9)
        c = sample_uniform(self.scene.depth, 50, seed=10)
        np.testing.assert_array_equal(a.mask.data, b.mask.data)
        self.assertFalse(np.array_equal(a.mask.data, c.mask.data))

    def test_bounds(self):
        total = self.scene.depth.size
        self.assertEqual(sample_uniform(self.scene.depth, 0, 1).count, 0)
        self.assertEqual(sample_uniform(self.scene.depth, total, 1).count, total)
        with self.assertRaises(ConfigurationError):
            sample_uniform(self.scene.depth, total + 1, 1)
        with self.assertRaises(ConfigurationError):
            sample_uniform(self.scene.depth, -1, 1)

    def test_inclusion_is_uniform(self):
        depth = np.ones((1, 16, 16))
        trials, n = 10_000, 32
        counts = np.zeros((16, 16))
        for seed in range(trials):
            counts += sample_uniform(depth, n, seed).mask.data[0]
        p = n / 256.0
        z = (counts - trials * p) / np.sqrt(trials * p * (1 - p))
        # ~0.3 % de los píxeles fuera de 3σ por azar
        self.assertLessEqual((np.abs(z) > 3).mean(), 0.02)
        chi2 = float((z * z).sum())
        self.assertLess(abs(chi2 - z.size), 3 * np.sqrt(2 * z.size))

    def test_helpers(self):
        self.assertEqual(default_sample_count(48, 64), 31)
        self.assertAlmostEqual(percent_samples(31, 48, 64), 1.0091, places=3)

    def test_export(self):
        sparse = sample_uniform(self.scene.depth, 20, 0)
        with tempfile.TemporaryDirectory() as tmp:
            values_path, mask_path = sparse.export(Path(tmp) / 'sparse.pgm')
            self.assertTrue(values_path.exists())
            self.assertEqual(mask_path.name, 'sparse_mask.pgm')


class LidarTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scene = generate(0, LIDAR_SCENE_PARAMS)

    def test_vlp16_has_sixteen_scanlines(self):
        spec = get_preset('VLP-16')
        self.assertEqual(spec.channels, 16)
        sparse = sample_lidar(self.scene.depth, spec, seed=0)
        rows = np.flatnonzero(sparse.mask.data[0].any(axis=1))
        self.assertEqual(len(rows), 16)
        self.assertTrue(sparse.mask.data[0, rows].all())
        self.assertAlmostEqual(sparse.density, 16 / LIDAR_SCENE_PARAMS.height)

    def test_halving_vertical_resolution_never_loses_points(self):
        for name in ('VLP-16', 'HDL-32E'):
            coarse_spec = get_preset(name)
            fine_spec = get_preset(name, vres_deg=coarse_spec.vres_deg / 2)
            for seed in range(3):
                coarse = sample_lidar(self.scene.depth, coarse_spec, seed=seed).mask.data
                fine = sample_lidar(self.scene.depth, fine_spec, seed=seed).mask.data
                self.assertGreaterEqual(fine.sum(), coarse.sum())
                self.assertTrue((fine >= coarse).all())

    def test_coverage_ordering(self):
        """
        Escena LiDAR de 240x320. Con la cámara por defecto (fy = H) una imagen
        de 48 filas separa las filas ~1.2°, más que la resolución vertical de
        HDL-64E y VLP-32C, y el orden de cobertura se desordena.
        """
        coverage = coverage_by_preset(self.scene.depth, seeds=range(3))
        self.assertEqual(coverage_ordering(coverage), ['VLP-32C', 'HDL-64E', 'HDL-32E', 'VLP-16'])

    def test_mounted_sensor_follows_the_surface(self):
        spec = get_preset('HDL-32E', mount_height_m=0.3)
        a = sample_lidar(self.scene.depth, spec, seed=2)
        b = sample_lidar(self.scene.depth, spec, seed=2)
        np.testing.assert_array_equal(a.mask.data, b.mask.data)
        per_column = a.mask.data[0].sum(axis=0)
        self.assertLessEqual(per_column.max(), spec.channels)
        self.assertGreater(a.count, 0)

    def test_seeded_jitter(self):
        spec = get_preset('VLP-32C')
        a = sample_lidar(self.scene.depth, spec, seed=5).mask.data
        b = sample_lidar(self.scene.depth, spec, seed=5).mask.data
        np.testing.assert_array_equal(a, b)

    def test_degenerate_camera(self):
        with self.assertRaises(ConfigurationError):
            sample_lidar(self.scene.depth, get_preset('VLP-16'), CameraIntrinsics(1.0, 0.0, 1.0, 1.0))

    def test_unknown_preset(self):
        with self.assertRaises(ConfigurationError):
            get_preset('HDL-128')

    def test_small_image(self):
        scene = generate(1, SceneParams(height=16, width=16))
        sparse = sample_lidar(scene.depth, get_preset('VLP-16'))
        self.assertIsInstance(sparse, SparseDepth)
        self.assertLessEqual(sparse.count, scene.depth.size)
