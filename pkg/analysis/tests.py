import tempfile
from pathlib import Path

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from analysis.heatmaps import improvement_map, write_improvement_map
from analysis.influence import field_areas, influential_field, output_aligned_pixel
from analysis.residual import residual_decomposition
from analysis.sweeps import SweepKind, sweep
from analysis.timing import time_inference
from depthnet.layers import ConvLayer, Downsample, Upsample
from depthnet.networks import InputMode, Model, build
from depthnet.training import TrainConfig, train
from pnpdepth.errors import ConfigurationError, ContractError
from pnpdepth.mixins import HELDOUT_SEED_OFFSET
from pnpdepth.seeding import make_rng
from refinement.batch import refine_batch
from refinement.pnp import PnPConfig
from scenes import netpbm
from scenes.generator import SceneParams, generate_many
from sparsity.sampling import SparseDepth, sample_uniform
from tensorcore.losses import LossKind
from tensorcore.tensor import Tensor


def ones_conv(name, kernel=3, relu=True):
    layer = ConvLayer(name, 1, 1, kernel=kernel, relu=relu)
    layer.weight.assign(np.ones(layer.weight.shape))
    return layer


def chain(*layers) -> Model:
    return Model(list(layers), InputMode.RGB, in_channels=1)


class InfluentialFieldTests(SimpleTestCase):

    def test_two_stacked_convs_give_five_by_five(self):
        model = chain(ones_conv('stem', kernel=1), ones_conv('a'), ones_conv('b', relu=False))
        field = influential_field(model, 'stem', (8, 8), size=(16, 16))
        self.assertEqual((field.height, field.width), (5, 5))
        self.assertEqual(field.bbox, (6, 6, 10, 10))
        self.assertEqual(field.count, 25)

    def test_single_conv_gives_three_by_three(self):
        model = chain(ones_conv('stem', kernel=1), ones_conv('a'), ones_conv('b', relu=False))
        field = influential_field(model, 'a', (8, 8), size=(16, 16))
        self.assertEqual((field.height, field.width), (3, 3))

    def test_resampling_layers_keep_fields_nested(self):
        model = chain(ones_conv('stem', kernel=1), Downsample('down'), ones_conv('mid'),
                      Upsample('up'), ones_conv('head', relu=False))
        fields = {}
        for tap in model.taps:
            source = output_aligned_pixel(model, tap, (8, 8), size=(16, 16))
            fields[tap] = influential_field(model, tap, source, size=(16, 16)).affected
        self.assertEqual(output_aligned_pixel(model, 'mid', (8, 8), size=(16, 16)), (4, 4))
        self.assertEqual(fields['mid'].sum(), 16)
        for earlier, later in zip(model.taps, model.taps[1:]):
            self.assertFalse((fields[later] & ~fields[earlier]).any(), f"{later} not inside {earlier}")

    def test_plain_cnn_fields_are_nested(self):
        model = build('plain_cnn', 'sd', seed=2)
        size = (24, 24)
        fields = [influential_field(model, tap, (12, 12), size=size).affected for tap in model.taps]
        for earlier, later in zip(fields, fields[1:]):
            self.assertFalse((later & ~earlier).any())
        areas = field_areas(model, size=size)
        self.assertEqual([areas[t] for t in model.taps], [81, 49, 25, 9])

    def test_encdec_areas_do_not_grow(self):
        model = build('encdec', 'rgb', seed=0)
        areas = field_areas(model, size=(32, 32))
        values = [areas[t] for t in model.taps]
        self.assertTrue(all(b <= a for a, b in zip(values, values[1:])), values)

    def test_probe_outside_z(self):
        model = build('plain_cnn', 'sd')
        with self.assertRaises(ConfigurationError):
            influential_field(model, 'conv1', (16, 0), size=(16, 16))


class ResidualTests(SimpleTestCase):

    def _case(self, mode, seed):
        rng = make_rng(seed)
        depth = rng.uniform(0.5, 10.0, size=(1, 8, 8))
        sparse = sample_uniform(depth, int(rng.integers(1, 20)), seed)
        model = build('plain_cnn', mode, seed=seed)
        rgb = Tensor(rng.uniform(0.0, 1.0, size=(3, 8, 8)))
        return model, model.make_input(rgb=rgb, sparse=sparse), sparse

    def test_rgb_gradient_is_a_sum_over_observed_pixels(self):
        for seed in range(20):
            model, x, sparse = self._case('rgb', seed)
            result = residual_decomposition(model, x, sparse)
            self.assertLess(result.residual_norm, 1e-10, f"case {seed}")
            self.assertEqual(result.n_pixels, sparse.count)
            self.assertGreater(np.abs(result.gradient).max(), 0.0)

    def test_other_losses_and_taps(self):
        model, x, sparse = self._case('rgb', 3)
        for kind in (LossKind.L2, LossKind.BERHU):
            self.assertLess(residual_decomposition(model, x, sparse, 'conv3', kind).residual_norm, 1e-10)

    def test_sparse_input_mode_is_reported(self):
        model, x, sparse = self._case('rgb+sd', 4)
        result = residual_decomposition(model, x, sparse)
        self.assertTrue(np.isfinite(result.residual_norm))

    def test_empty_mask(self):
        model, x, _ = self._case('rgb', 5)
        with self.assertRaises(ContractError):
            residual_decomposition(model, x, SparseDepth.empty_like(np.ones((1, 8, 8))))


class RefinementBenchmarkTests(SimpleTestCase):
    """Modelo sd entrenado sobre escenas sintéticas y evaluado en escenas aparte."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        bench = settings.PNP_BENCHMARK
        params = SceneParams()
        train_scenes = generate_many(bench['train_scenes'], 0, params)
        cls.scenes = generate_many(bench['test_scenes'], HELDOUT_SEED_OFFSET, params)
        cfg = TrainConfig(epochs=bench['epochs'], seed=0, sample_range=(10, 500))
        cls.model = train(build('plain_cnn', 'sd', seed=0), train_scenes, cfg)

    def test_refinement_lowers_dense_error(self):
        items = [(s, sample_uniform(s.depth, 31, i)) for i, s in enumerate(self.scenes)]
        report = refine_batch(self.model, items, PnPConfig())
        self.assertEqual(report.failure_count, 0)
        self.assertLess(report.mean_after().rmse_m, report.mean_before().rmse_m)
        self.assertGreaterEqual(report.loss_decreased_fraction(), 0.95)

    def test_iteration_gains_saturate(self):
        result = sweep(SweepKind.ITERATIONS, self.model, self.scenes, values=[0, 1, 2, 5, 10, 20])
        rmse = {p.setting: p.after.rmse_m for p in result.points}
        self.assertEqual(rmse[0], result.points[0].before.rmse_m)
        self.assertLess(rmse[5], rmse[0])
        self.assertLess(rmse[10] - rmse[20], rmse[0] - rmse[5])

    def test_more_samples_do_not_hurt(self):
        result = sweep(SweepKind.SAMPLES, self.model, self.scenes, values=[10, 50, 100, 500])
        rmse = [p.after.rmse_m for p in result.points]
        self.assertTrue(all(b <= a for a, b in zip(rmse, rmse[1:])), rmse)
        self.assertEqual([p.n_samples_mean for p in result.points], [10, 50, 100, 500])


class SweepTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scenes = generate_many(2, 0, SceneParams(height=16, width=16, n_objects=2))
        cls.model = build('plain_cnn', 'sd', seed=0)

    def test_tap_sweep_reports_position_and_field(self):
        result = sweep(SweepKind.TAP, self.model, self.scenes, PnPConfig(iterations=2))
        self.assertEqual([p.setting for p in result.points], self.model.taps)
        self.assertEqual(result.points[0].setting_norm, 0.0)
        self.assertEqual(result.points[-1].setting_norm, 1.0)
        areas = [p.field_area for p in result.points]
        self.assertTrue(all(b <= a for a, b in zip(areas, areas[1:])), areas)

    def test_csv_without_runtime_is_reproducible(self):
        a = sweep('iters', self.model, self.scenes, values=[0, 2]).to_csv(include_runtime=False)
        b = sweep('iters', self.model, self.scenes, values=[0, 2], workers=2).to_csv(include_runtime=False)
        self.assertEqual(a, b)
        self.assertTrue(a.startswith('kind,setting,setting_norm,'))

    def test_lidar_sweep_orders_presets(self):
        result = sweep(SweepKind.LIDAR, self.model, self.scenes, PnPConfig(iterations=1),
                       values=['VLP-16', 'HDL-64E'])
        self.assertEqual(len(result.points), 2)
        self.assertEqual(set(result.ordering), {'VLP-16', 'HDL-64E'})

    def test_settings_must_be_ordered(self):
        with self.assertRaises(ConfigurationError):
            sweep('iters', self.model, self.scenes, values=[5, 2])
        with self.assertRaises(ConfigurationError):
            sweep('tap', self.model, self.scenes, values=['conv3', 'conv1'])
        with self.assertRaises(ConfigurationError):
            sweep('depth', self.model, self.scenes)


class TimingTests(SimpleTestCase):

    def setUp(self):
        scene = generate_many(1, 0, SceneParams(height=16, width=16, n_objects=2))[0]
        self.model = build('plain_cnn', 'sd', seed=0)
        self.sparse = sample_uniform(scene.depth, 10, 0)
        self.x = self.model.input_for(scene, self.sparse)

    def test_refined_inference_is_slower(self):
        with self.assertLogs('analysis.timing', level='WARNING'):
            result = time_inference(self.model, self.x, self.sparse, PnPConfig(iterations=5), runs=5)
        self.assertEqual(len(result.pnp_times), 5)
        self.assertGreater(result.ratio, 1.0)
        self.assertFalse(result.reliable)
        self.assertEqual(result.row()['iterations'], '5')

    def test_single_run_warns(self):
        with self.assertLogs('analysis.timing', level='WARNING') as logs:
            time_inference(self.model, self.x, self.sparse, runs=1)
        self.assertIn('1 repeticiones', logs.output[0])
        with self.assertRaises(ConfigurationError):
            time_inference(self.model, self.x, self.sparse, runs=0)


class HeatmapTests(SimpleTestCase):

    def test_sign_follows_error_reduction(self):
        gt = np.full((1, 2, 2), 2.0)
        before = np.array([[3.0, 2.0], [1.0, 2.5]])
        after = np.array([[2.5, 2.5], [1.0, 2.0]])
        np.testing.assert_allclose(improvement_map(before, after, gt), [[0.5, -0.5], [0.0, 0.5]])

    def test_written_map_decodes(self):
        gt = np.full((1, 4, 4), 2.0)
        before = np.full((1, 1, 4, 4), 3.0)
        after = before.copy()
        after[0, 0, 0, 0] = 2.0
        with tempfile.TemporaryDirectory() as tmp:
            path, scale = write_improvement_map(Path(tmp) / 'gain.pgm', before, after, gt)
            self.assertEqual(scale, 1.0)
            pixels = netpbm.read_pgm16(path)
        decoded = netpbm.decode_signed_map(pixels, scale)
        self.assertAlmostEqual(decoded[0, 0], 1.0, places=4)
        self.assertAlmostEqual(decoded[1, 1], 0.0, places=4)
