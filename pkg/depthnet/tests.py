import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from depthnet import checkpoint
from depthnet.layers import ConvLayer
from depthnet.networks import SPARSE_INPUT_SCALE, Arch, InputMode, Model, build, split
from depthnet.training import DivergenceError, TrainConfig, beats_mean_predictor, train
from pnpdepth.errors import CheckpointError, ConfigurationError
from pnpdepth.mixins import HELDOUT_SEED_OFFSET
from scenes.generator import SceneParams, generate_many
from sparsity.sampling import sample_uniform
from tensorcore.losses import LossKind

SMALL = SceneParams(height=16, width=16, n_objects=2)


def _input(model, scene, n=10, seed=0):
    sparse = sample_uniform(scene.depth, n, seed) if model.input_mode.uses_sparse else None
    return model.input_for(scene, sparse)


class ArchitectureTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scene = generate_many(1, 0, SMALL)[0]

    def test_default_taps(self):
        self.assertEqual(build('plain_cnn', 'sd').default_tap, 'conv1')
        self.assertEqual(build('encdec', 'rgb').default_tap, 'bottleneck')
        self.assertEqual(build('coarse_fine', 'rgb+sd').default_tap, 'coarse.bottleneck')
        self.assertEqual(build('plain_cnn', 'sd').taps, ['conv1', 'conv2', 'conv3', 'conv4'])
        self.assertIn('coarse.head', build('coarse_fine', 'rgb').taps)

    def test_output_is_dense_single_channel(self):
        for arch in ('plain_cnn', 'encdec', 'coarse_fine'):
            model = build(arch, 'rgb+sd')
            out = model.run(_input(model, self.scene))
            self.assertEqual(out.shape, (1, 1, 16, 16), arch)

    def test_front_then_rear_is_bit_identical(self):
        for arch in ('plain_cnn', 'encdec', 'coarse_fine'):
            model = build(arch, 'rgb+sd', seed=3)
            x = _input(model, self.scene)
            full = model.run(x).tobytes()
            for tap in model.taps:
                front, rear = split(model, tap)
                self.assertEqual(rear(front(x), x).tobytes(), full, f"{arch}/{tap}")

    def test_input_modes(self):
        sparse = sample_uniform(self.scene.depth, 12, 1)
        for mode, channels in (('rgb', 3), ('sd', 2), ('rgb+sd', 5)):
            model = build('plain_cnn', mode)
            x = model.make_input(rgb=self.scene.rgb, sparse=sparse)
            self.assertEqual(x.shape, (1, channels, 16, 16))
        x = build('plain_cnn', 'sd').make_input(sparse=sparse)
        np.testing.assert_array_equal(x.data[0, 0], sparse.values.data[0] * SPARSE_INPUT_SCALE)
        np.testing.assert_array_equal(x.data[0, 1], sparse.mask.data[0])

    def test_missing_sparse_input(self):
        with self.assertRaises(ConfigurationError):
            build('plain_cnn', 'sd').make_input(rgb=self.scene.rgb)

    def test_wrong_channel_count(self):
        model = build('plain_cnn', 'sd')
        x = build('plain_cnn', 'rgb').input_for(self.scene)
        with self.assertRaises(ConfigurationError):
            model.run(x)

    def test_unknown_tap_lists_valid_taps(self):
        with self.assertRaisesMessage(ConfigurationError, 'conv1, conv2, conv3, conv4'):
            split(build('plain_cnn', 'sd'), 'conv9')

    def test_unknown_architecture(self):
        with self.assertRaises(ConfigurationError):
            build('resnet', 'sd')
        with self.assertRaises(ConfigurationError):
            InputMode.parse('depth')

    def test_custom_model_from_layers(self):
        stem = ConvLayer('stem', 1, 1, kernel=1, relu=False)
        head = ConvLayer('head', 1, 1, kernel=1, relu=False)
        model = Model([stem, head], InputMode.RGB, in_channels=1)
        self.assertEqual(model.taps, ['stem'])
        self.assertIs(model.arch, Arch.CUSTOM)
        with self.assertRaises(ConfigurationError):
            Model([ConvLayer('a', 1, 2, relu=False)], InputMode.RGB, in_channels=1)

    def test_same_seed_same_weights(self):
        self.assertEqual(build('encdec', 'sd', seed=4).parameter_bytes(),
                         build('encdec', 'sd', seed=4).parameter_bytes())
        self.assertNotEqual(build('encdec', 'sd', seed=4).parameter_bytes(),
                            build('encdec', 'sd', seed=5).parameter_bytes())


class CheckpointTests(SimpleTestCase):

    def test_dump_and_load_restore_the_model(self):
        scene = generate_many(1, 2, SMALL)[0]
        for arch, mode in (('plain_cnn', 'sd'), ('coarse_fine', 'rgb+sd')):
            model = build(arch, mode, seed=8)
            restored = checkpoint.loads(checkpoint.dumps(model))
            self.assertIs(restored.arch, model.arch)
            self.assertIs(restored.input_mode, model.input_mode)
            self.assertEqual(restored.parameter_bytes(), model.parameter_bytes())
            x = _input(model, scene)
            self.assertEqual(restored.run(x).tobytes(), model.run(x).tobytes())

    def test_header(self):
        data = checkpoint.dumps(build('encdec', 'rgb'))
        self.assertEqual(data[:4], b'PNPD')
        self.assertEqual(int.from_bytes(data[4:8], 'little'), checkpoint.VERSION)

    def test_flipped_byte_is_detected(self):
        data = bytearray(checkpoint.dumps(build('plain_cnn', 'sd')))
        data[len(data) // 2] ^= 0x01
        with self.assertRaisesMessage(CheckpointError, 'checkpoint corrupt'):
            checkpoint.loads(bytes(data))

    def test_bad_magic_and_truncation(self):
        data = checkpoint.dumps(build('plain_cnn', 'sd'))
        with self.assertRaises(CheckpointError):
            checkpoint.loads(b'XXXX' + data[4:])
        with self.assertRaises(CheckpointError):
            checkpoint.loads(data[:10])

    def test_file_round_trip(self):
        model = build('plain_cnn', 'rgb', seed=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = checkpoint.save(model, Path(tmp) / 'nested' / 'm.pnpd')
            self.assertEqual(checkpoint.load(path).parameter_bytes(), model.parameter_bytes())
            with self.assertRaises(CheckpointError):
                checkpoint.load(Path(tmp) / 'missing.pnpd')

    def test_custom_models_are_not_serialized(self):
        model = Model([ConvLayer('stem', 1, 1, kernel=1), ConvLayer('head', 1, 1, kernel=1, relu=False)],
                      InputMode.RGB, in_channels=1)
        with self.assertRaises(ConfigurationError):
            checkpoint.dumps(model)


class TrainingTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.scenes = generate_many(4, 0, SMALL)

    def test_history_and_determinism(self):
        cfg = TrainConfig(epochs=3, batch_size=2, seed=1)
        a = train(build('plain_cnn', 'sd', seed=1), self.scenes, cfg)
        b = train(build('plain_cnn', 'sd', seed=1), self.scenes, cfg)
        self.assertEqual(len(a.history), 3)
        self.assertTrue(all(math.isfinite(v) for v in a.history))
        self.assertEqual(a.parameter_bytes(), b.parameter_bytes())

    def test_training_changes_weights(self):
        model = build('encdec', 'rgb+sd', seed=2)
        before = model.parameter_bytes()
        train(model, self.scenes, TrainConfig(epochs=1, batch_size=4))
        self.assertNotEqual(model.parameter_bytes(), before)

    def test_zero_epochs_is_a_no_op(self):
        model = build('plain_cnn', 'rgb')
        before = model.parameter_bytes()
        train(model, self.scenes, TrainConfig(epochs=0))
        self.assertEqual(model.parameter_bytes(), before)
        self.assertEqual(model.history, [])

    def test_divergence_restores_last_finite_weights(self):
        model = build('plain_cnn', 'sd', seed=0)
        cfg = TrainConfig(epochs=5, batch_size=2, learning_rate=1e200, loss=LossKind.L2)
        with self.assertRaises(DivergenceError) as ctx:
            train(model, self.scenes, cfg)
        for _, tensor in ctx.exception.model.parameters():
            self.assertTrue(np.isfinite(tensor.data).all())

    def test_invalid_config(self):
        with self.assertRaises(ConfigurationError):
            TrainConfig(batch_size=0).validate()
        with self.assertRaises(ConfigurationError):
            train(build('plain_cnn', 'sd'), [], TrainConfig())


class ConvergenceTests(SimpleTestCase):
    """Modelo sd entrenado 30 épocas sobre 50 escenas pequeñas."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.train_scenes = generate_many(50, 0, SMALL)
        cls.test_scenes = generate_many(10, HELDOUT_SEED_OFFSET, SMALL)
        cfg = TrainConfig(epochs=30, seed=0, sample_range=(10, 128))
        cls.model = train(build('plain_cnn', 'sd', seed=0), cls.train_scenes, cfg)

    def test_final_epoch_improves_on_the_first(self):
        self.assertEqual(len(self.model.history), 30)
        self.assertLess(self.model.history[-1], self.model.history[0])

    def test_beats_the_mean_depth_predictor(self):
        ok, ours, ref = beats_mean_predictor(self.model, self.train_scenes, self.test_scenes, n_samples=128)
        self.assertTrue(ok, f"model {ours:.4f} vs mean {ref:.4f}")
