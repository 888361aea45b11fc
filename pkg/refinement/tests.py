import numpy as np
from django.test import SimpleTestCase

from depthnet.layers import ConvLayer
from depthnet.networks import InputMode, Model, build
from pnpdepth.errors import ConfigurationError
from refinement.batch import refine_batch
from refinement.pnp import PnPConfig, RefineStatus, UpdateRule, refine
from scenes.generator import SceneParams, generate_many
from sparsity.sampling import SparseDepth, sample_uniform
from tensorcore.losses import LossKind
from tensorcore.tensor import Tensor

SMALL = SceneParams(height=16, width=16, n_objects=2)


def toy_model() -> Model:
    """pred = 2 * z, z = x (un píxel)."""
    stem = ConvLayer('stem', 1, 1, kernel=1, relu=False)
    head = ConvLayer('head', 1, 1, kernel=1, relu=False)
    stem.weight.assign(np.ones((1, 1, 1, 1)))
    head.weight.assign(np.full((1, 1, 1, 1), 2.0))
    return Model([stem, head], InputMode.RGB, default_tap='stem', in_channels=1)


def toy_inputs(target=5.0):
    x = Tensor(np.ones((1, 1, 1, 1)))
    sparse = SparseDepth.from_mask(np.full((1, 1, 1), target), np.ones((1, 1, 1)))
    return x, sparse


class ToyModelTests(SimpleTestCase):

    def test_sign_update_single_step(self):
        x, sparse = toy_inputs()
        result = refine(toy_model(), x, sparse, PnPConfig(iterations=1))
        self.assertEqual(result.base.data.item(), 2.0)
        self.assertAlmostEqual(result.z.data.item(), 1.01, delta=1e-12)
        self.assertAlmostEqual(result.depth.data.item(), 2.02, delta=1e-12)
        self.assertEqual(result.trace.losses[0], 3.0)
        self.assertAlmostEqual(result.trace.losses[1], 2.98, delta=1e-12)
        self.assertEqual(result.status, RefineStatus.OK)

    def test_raw_gradient_single_step(self):
        x, sparse = toy_inputs()
        cfg = PnPConfig(iterations=1, update_rule=UpdateRule.RAW_GRADIENT)
        result = refine(toy_model(), x, sparse, cfg)
        self.assertAlmostEqual(result.z.data.item(), 1.02, delta=1e-12)
        self.assertAlmostEqual(result.depth.data.item(), 2.04, delta=1e-12)

    def test_raw_step_on_a_linear_rear_lowers_the_loss(self):
        rng = np.random.default_rng(7)
        layers = [ConvLayer('stem', 1, 2, relu=False), ConvLayer('mid', 2, 2, relu=False),
                  ConvLayer('head', 2, 1, relu=False)]
        for layer in layers:
            layer.init_he(rng)
        model = Model(layers, InputMode.RGB, default_tap='stem', in_channels=1)
        x = Tensor(rng.normal(size=(1, 1, 8, 8)))
        sparse = sample_uniform(rng.uniform(0.5, 5.0, size=(1, 8, 8)), 20, 0)
        for tap in model.taps:
            cfg = PnPConfig(tap=tap, iterations=1, alpha=1e-4, loss_kind=LossKind.L2,
                            update_rule=UpdateRule.RAW_GRADIENT)
            trace = refine(model, x, sparse, cfg).trace
            self.assertLess(trace.losses[1], trace.losses[0], tap)

    def test_sign_steps_are_bounded_by_alpha(self):
        x, sparse = toy_inputs()
        result = refine(toy_model(), x, sparse, PnPConfig(iterations=10, alpha=0.05))
        self.assertEqual(len(result.trace), 11)
        self.assertEqual(result.trace.update_norms[0], 0.0)
        self.assertTrue(all(n <= 0.05 for n in result.trace.update_norms))
        self.assertTrue(all(b < a for a, b in zip(result.trace.losses, result.trace.losses[1:])))

    def test_numeric_failure_keeps_last_finite_prediction(self):
        x, sparse = toy_inputs()
        cfg = PnPConfig(iterations=3, alpha=1e308, update_rule=UpdateRule.RAW_GRADIENT)
        result = refine(toy_model(), x, sparse, cfg)
        self.assertEqual(result.status, RefineStatus.NUMERIC_FAILURE)
        self.assertAlmostEqual(result.depth.data.item(), 2.0)
        self.assertTrue(np.isfinite(result.depth.data).all())

    def test_unpacks_as_depth_and_trace(self):
        x, sparse = toy_inputs()
        depth, trace = refine(toy_model(), x, sparse, PnPConfig(iterations=2))
        self.assertEqual(depth.shape, (1, 1, 1, 1))
        self.assertEqual(len(trace), 3)
        self.assertTrue(trace.to_csv().startswith('iteration,sparse_loss,update_inf_norm\n'))


class RefineTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scene = generate_many(1, 0, SMALL)[0]
        cls.sparse = sample_uniform(cls.scene.depth, 12, 0)

    def _model(self, arch='plain_cnn', mode='rgb+sd'):
        model = build(arch, mode, seed=1)
        return model, model.input_for(self.scene, self.sparse)

    def test_zero_iterations_returns_the_network_output(self):
        for arch in ('plain_cnn', 'encdec', 'coarse_fine'):
            model, x = self._model(arch)
            result = refine(model, x, self.sparse, PnPConfig(iterations=0))
            self.assertEqual(result.depth.tobytes(), model.run(x).tobytes(), arch)
            self.assertEqual(len(result.trace), 1)

    def test_weights_are_frozen(self):
        model, x = self._model('coarse_fine')
        before = model.parameter_bytes()
        for rule in UpdateRule:
            refine(model, x, self.sparse, PnPConfig(iterations=3, update_rule=rule))
        self.assertEqual(model.parameter_bytes(), before)
        for _, tensor in model.parameters():
            self.assertTrue(tensor.grad is None or not tensor.grad.any())

    def test_every_tap_and_loss(self):
        model, x = self._model('encdec')
        for tap in model.taps:
            for kind in LossKind:
                result = refine(model, x, self.sparse, PnPConfig(tap=tap, iterations=2, loss_kind=kind))
                self.assertEqual(result.depth.shape, (1, 1, 16, 16))
                self.assertEqual(result.tap, tap)

    def test_empty_mask_returns_base(self):
        model, x = self._model()
        empty = SparseDepth.empty_like(self.scene.depth)
        result = refine(model, x, empty, PnPConfig(iterations=4))
        self.assertEqual(result.status, RefineStatus.NO_OBSERVATION)
        self.assertEqual(result.depth.tobytes(), model.run(x).tobytes())
        self.assertEqual(len(result.trace), 5)
        self.assertFalse(any(result.trace.update_norms))

    def test_adam_state_does_not_leak_between_calls(self):
        model, x = self._model()
        cfg = PnPConfig(iterations=3, update_rule=UpdateRule.ADAM)
        a = refine(model, x, self.sparse, cfg)
        b = refine(model, x, self.sparse, cfg)
        self.assertEqual(a.depth.tobytes(), b.depth.tobytes())

    def test_deterministic(self):
        model, x = self._model()
        a = refine(model, x, self.sparse, PnPConfig(iterations=5))
        b = refine(model, x, self.sparse, PnPConfig(iterations=5))
        self.assertEqual(a.depth.tobytes(), b.depth.tobytes())
        self.assertEqual(a.trace.losses, b.trace.losses)

    def test_keep_predictions(self):
        model, x = self._model()
        result = refine(model, x, self.sparse, PnPConfig(iterations=2, keep_predictions=True))
        self.assertEqual(result.trace.entries[0].prediction.tobytes(), result.base.tobytes())
        self.assertEqual(result.trace.entries[-1].prediction.tobytes(), result.depth.tobytes())

    def test_invalid_arguments(self):
        model, x = self._model()
        with self.assertRaises(ConfigurationError):
            refine(model, x, self.sparse, PnPConfig(tap='conv5'))
        with self.assertRaises(ConfigurationError):
            refine(model, x, self.sparse, PnPConfig(alpha=0.0))
        with self.assertRaises(ConfigurationError):
            refine(model, x, self.sparse, PnPConfig(iterations=-1))
        with self.assertRaises(ConfigurationError):
            refine(model, x, sample_uniform(np.ones((1, 8, 8)), 3, 0))
        with self.assertRaises(ConfigurationError):
            UpdateRule.parse('momentum')


class BatchTests(SimpleTestCase):

    def test_failures_are_collected(self):
        scenes = generate_many(3, 0, SMALL)
        model = build('plain_cnn', 'sd', seed=0)
        items = [(s, sample_uniform(s.depth, 10, i)) for i, s in enumerate(scenes)]
        bad_sparse = sample_uniform(np.ones((1, 8, 8)), 3, 0)
        items.insert(1, (scenes[0], bad_sparse))
        report = refine_batch(model, items, PnPConfig(iterations=2))
        self.assertEqual(len(report.outcomes), 3)
        self.assertEqual(report.failure_count, 1)
        self.assertEqual(report.failures[0][0], 1)
        self.assertEqual(report.mean_before().n_pixels, 3 * 256)
        self.assertIn('rmse_m', report.improvement())

    def test_full_mask_fit_with_large_sign_steps(self):
        scene = generate_many(1, 3, SceneParams())[0]
        full = SparseDepth.from_mask(scene.depth, np.ones(scene.depth.shape))
        model = build('plain_cnn', 'sd', seed=0)
        for tap in model.taps:
            cfg = PnPConfig(tap=tap, iterations=50, alpha=0.2, loss_kind=LossKind.L2)
            report = refine_batch(model, [(scene, full)], cfg)
            trace = report.outcomes[0].result.trace
            self.assertLess(trace.losses[-1], 0.1 * trace.losses[0], tap)

    def test_per_scene_improvement(self):
        scenes = generate_many(2, 0, SMALL)
        model = build('plain_cnn', 'sd', seed=0)
        items = [(s, sample_uniform(s.depth, 10, i)) for i, s in enumerate(scenes)]
        report = refine_batch(model, items, PnPConfig(iterations=0))
        for outcome in report.outcomes:
            self.assertEqual(outcome.improvement, {'rmse_m': 0.0, 'mae_m': 0.0, 'mre': 0.0})
        report = refine_batch(model, items, PnPConfig(iterations=3))
        outcome = report.outcomes[1]
        expected = 100.0 * (outcome.before.rmse_m - outcome.after.rmse_m) / outcome.before.rmse_m
        self.assertEqual(outcome.improvement['rmse_m'], expected)
