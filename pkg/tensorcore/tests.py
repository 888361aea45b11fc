import numpy as np
from django.test import SimpleTestCase

from pnpdepth.errors import ConfigurationError, ContractError, GraphError, NumericError
from sparsity.sampling import SparseDepth
from tensorcore import losses, ops
from tensorcore.graph import Graph
from tensorcore.tensor import Tensor


def _target(values, mask):
    return SparseDepth(values=Tensor(values * mask), mask=Tensor(mask))


def _tolerance(numeric: float) -> float:
    return max(1e-4 * abs(numeric), 1e-7)


class GradientCheckTests(SimpleTestCase):
    """Gradientes analíticos frente a diferencias centrales."""

    def setUp(self):
        rng = np.random.default_rng(3)
        self.x = rng.normal(size=(1, 2, 8, 8))
        self.w1 = rng.normal(size=(3, 2, 3, 3))
        self.b1 = rng.normal(size=(3,))
        self.w2 = rng.normal(size=(2, 6, 3, 3))
        self.w3 = rng.normal(size=(1, 2, 3, 3))
        self.target_values = rng.uniform(0.5, 2.0, size=(1, 8, 8))
        self.mask = (rng.uniform(size=(1, 8, 8)) < 0.5).astype(float)

    def _build(self, x_data, kind=losses.LossKind.L2, threshold=None):
        graph = Graph('check')
        x = graph.leaf(Tensor(x_data, requires_grad=True), name='x')
        h = ops.conv2d(x, graph.leaf(Tensor(self.w1)), padding=1)
        h = ops.relu(ops.bias(h, graph.leaf(Tensor(self.b1))))
        h = ops.concat([h, ops.scale(h, 0.5)])
        h = ops.downsample2x(h)
        h = ops.conv2d(h, graph.leaf(Tensor(self.w2)), padding=1)
        h = ops.upsample2x(h)
        h = ops.add(h, ops.scale(x, 0.3))
        out = ops.conv2d(h, graph.leaf(Tensor(self.w3)), padding=1)
        node = losses.loss(out, _target(self.target_values, self.mask), kind, threshold=threshold)
        return graph, x, node

    def _value(self, x_data, kind=losses.LossKind.L2, threshold=None) -> float:
        graph, _, node = self._build(x_data, kind, threshold)
        return float(graph.forward(node).data)

    def test_input_gradient_matches_finite_differences(self):
        graph, x, node = self._build(self.x)
        graph.forward(node)
        graph.backward(node)
        analytic = x.output.grad
        eps = 1e-6
        rng = np.random.default_rng(0)
        for flat in rng.choice(self.x.size, size=12, replace=False):
            idx = np.unravel_index(flat, self.x.shape)
            plus, minus = self.x.copy(), self.x.copy()
            plus[idx] += eps
            minus[idx] -= eps
            numeric = (self._value(plus) - self._value(minus)) / (2 * eps)
            self.assertAlmostEqual(analytic[idx], numeric, delta=_tolerance(numeric))

    def test_weight_gradient_of_strided_conv(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 2, 7, 7))
        w = rng.normal(size=(1, 2, 3, 3))
        values = rng.uniform(size=(2, 1, 4, 4))

        def value(w_data):
            graph = Graph()
            out = ops.conv2d(graph.leaf(Tensor(x)), graph.leaf(Tensor(w_data)), stride=2, padding=1)
            return graph, graph.nodes[1], losses.loss(out, _target(values, np.ones_like(values)), 'l2')

        graph, w_node, node = value(w)
        w_node.output.requires_grad = True
        graph.backward(node)
        eps = 1e-6
        for idx in [(0, 0, 0, 0), (0, 1, 2, 1), (0, 0, 1, 1)]:
            plus, minus = w.copy(), w.copy()
            plus[idx] += eps
            minus[idx] -= eps
            gp, _, np_ = value(plus)
            gm, _, nm = value(minus)
            numeric = (float(gp.forward(np_).data) - float(gm.forward(nm).data)) / (2 * eps)
            self.assertAlmostEqual(w_node.output.grad[idx], numeric, delta=_tolerance(numeric))

    def test_berhu_gradient_away_from_threshold(self):
        graph, x, node = self._build(self.x, losses.LossKind.BERHU, threshold=0.3)
        graph.forward(node)
        graph.backward(node)
        eps = 1e-6
        idx = (0, 1, 4, 4)
        plus, minus = self.x.copy(), self.x.copy()
        plus[idx] += eps
        minus[idx] -= eps
        numeric = (self._value(plus, "berhu", 0.3) - self._value(minus, "berhu", 0.3)) / (2 * eps)
        self.assertAlmostEqual(x.output.grad[idx], numeric, delta=_tolerance(numeric))


class PerOpGradientTests(SimpleTestCase):
    """Cada operación, comprobada coordenada a coordenada (al menos 100)."""

    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.x = self.rng.normal(size=(1, 2, 8, 8))

    def _check(self, op, data, kind='l2', threshold=None):
        out_shape = {}

        def build(array):
            graph = Graph('op')
            leaf = graph.leaf(Tensor(array, requires_grad=True), name='in')
            out = op(graph, leaf)
            if 'target' not in out_shape:
                out_shape['target'] = self.rng.uniform(-1.0, 1.0, size=out.shape)
            target = _target(out_shape['target'], np.ones(out.shape))
            return graph, leaf, losses.loss(out, target, kind, threshold=threshold)

        graph, leaf, node = build(data)
        graph.forward(node)
        graph.backward(node)
        analytic = leaf.output.grad
        eps = 1e-6
        for idx in np.ndindex(*data.shape):
            plus, minus = data.copy(), data.copy()
            plus[idx] += eps
            minus[idx] -= eps
            gp, _, lp = build(plus)
            gm, _, lm = build(minus)
            numeric = (float(gp.forward(lp).data) - float(gm.forward(lm).data)) / (2 * eps)
            self.assertAlmostEqual(analytic[idx], numeric, delta=_tolerance(numeric),
                                   msg=f"coordinate {idx}")
        return data.size

    def test_conv2d_input(self):
        w = self.rng.normal(size=(3, 2, 3, 3))
        for stride in (1, 2):
            count = self._check(lambda g, x: ops.conv2d(x, g.leaf(Tensor(w)), stride=stride, padding=1), self.x)
            self.assertGreaterEqual(count, 100)

    def test_conv2d_weight(self):
        x = self.rng.normal(size=(1, 3, 6, 6))
        w = self.rng.normal(size=(4, 3, 3, 3))
        self.assertGreaterEqual(self._check(lambda g, wl: ops.conv2d(g.leaf(Tensor(x)), wl, padding=1), w), 100)

    def test_bias(self):
        b = self.rng.normal(size=(2,))
        self._check(lambda g, x: ops.bias(x, g.leaf(Tensor(b))), self.x)
        self._check(lambda g, bl: ops.bias(g.leaf(Tensor(self.x)), bl), b)

    def test_relu(self):
        self._check(lambda g, x: ops.relu(x), self.x)

    def test_add_and_scale(self):
        other = self.rng.normal(size=self.x.shape)
        self._check(lambda g, x: ops.add(x, g.leaf(Tensor(other))), self.x)
        self._check(lambda g, x: ops.scale(x, -1.7), self.x)

    def test_concat(self):
        other = self.rng.normal(size=(1, 3, 8, 8))
        self._check(lambda g, x: ops.concat([g.leaf(Tensor(other)), x]), self.x)

    def test_resampling(self):
        self._check(lambda g, x: ops.upsample2x(x), self.x)
        self._check(lambda g, x: ops.downsample2x(x), self.x)

    def test_losses(self):
        for kind, threshold in (('l1', None), ('l2', None), ('berhu', 0.3)):
            self._check(lambda g, x: x, self.x, kind=kind, threshold=threshold)


class OperatorExampleTests(SimpleTestCase):

    def test_identity_kernel_copies_the_input(self):
        x = np.random.default_rng(4).normal(size=(1, 2, 5, 7))
        w = np.zeros((2, 2, 3, 3))
        w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
        graph = Graph()
        out = ops.conv2d(graph.leaf(Tensor(x)), graph.leaf(Tensor(w)), padding=1)
        np.testing.assert_array_equal(graph.forward(out).data, x)

    def test_relu_values(self):
        graph = Graph()
        out = ops.relu(graph.leaf(Tensor(np.array([[[[-1.0, 0.0, 2.0]]]]))))
        np.testing.assert_array_equal(graph.forward(out).data.ravel(), [0.0, 0.0, 2.0])

    def test_sum_of_squares_gradient(self):
        graph = Graph()
        z = graph.leaf(Tensor(np.array([[[[1.0, 2.0]]]]), requires_grad=True), name='z')
        node = losses.loss(z, _target(np.zeros((1, 1, 2)), np.ones((1, 1, 2))), 'l2', reduction='sum')
        self.assertEqual(float(graph.forward(node).data), 5.0)
        graph.backward(node)
        np.testing.assert_array_equal(z.output.grad.ravel(), [2.0, 4.0])

    def test_five_layer_network(self):
        rng = np.random.default_rng(8)
        x_data = rng.normal(size=(1, 2, 8, 8))
        widths = [2, 4, 4, 4, 4, 1]
        weights = [rng.normal(size=(o, c, 3, 3)) * 0.2 / np.sqrt(9 * c) for c, o in zip(widths, widths[1:])]
        target = rng.uniform(-1.0, 1.0, size=(1, 8, 8))

        def build(data):
            graph = Graph('five')
            x = graph.leaf(Tensor(data, requires_grad=True), name='x')
            h = x
            for i, w in enumerate(weights):
                h = ops.conv2d(h, graph.leaf(Tensor(w)), padding=1)
                if i < len(weights) - 1:
                    # sesgo 3: ninguna activación cerca del codo de relu
                    h = ops.relu(ops.bias(h, graph.leaf(Tensor(np.full(w.shape[0], 3.0)))))
            return graph, x, losses.loss(h, _target(target, np.ones_like(target)), 'l2')

        graph, x, node = build(x_data)
        graph.backward(node)
        analytic = x.output.grad
        h = 1e-5
        for flat in rng.choice(x_data.size, size=32, replace=False):
            idx = np.unravel_index(flat, x_data.shape)
            plus, minus = x_data.copy(), x_data.copy()
            plus[idx] += h
            minus[idx] -= h
            gp, _, lp = build(plus)
            gm, _, lm = build(minus)
            numeric = (float(gp.forward(lp).data) - float(gm.forward(lm).data)) / (2 * h)
            self.assertLessEqual(abs(analytic[idx] - numeric), _tolerance(numeric), f"coordinate {idx}")


class TruncatedBackwardTests(SimpleTestCase):

    def _chain(self):
        rng = np.random.default_rng(5)
        graph = Graph('trunc')
        x = graph.leaf(Tensor(rng.normal(size=(1, 1, 6, 6)), requires_grad=True), name='x')
        w1 = graph.leaf(Tensor(rng.normal(size=(2, 1, 3, 3)), requires_grad=True), name='w1')
        w2 = graph.leaf(Tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True), name='w2')
        z = ops.relu(ops.conv2d(x, w1, padding=1), name='z')
        out = ops.conv2d(z, w2, padding=1)
        mask = np.zeros((1, 6, 6))
        mask[0, 2, 3] = mask[0, 4, 1] = 1.0
        node = losses.loss(out, _target(np.ones((1, 6, 6)), mask), 'l1')
        return graph, x, w1, w2, z, node

    def test_parameters_receive_no_gradient(self):
        graph, x, w1, w2, z, node = self._chain()
        g = graph.backward_to(node, z)
        self.assertEqual(g.shape, z.shape)
        for leaf in (x, w1, w2):
            self.assertTrue(leaf.output.grad is None or not leaf.output.grad.any())

    def test_stale_gradients_are_cleared(self):
        graph, x, w1, w2, z, node = self._chain()
        graph.backward(node)
        self.assertIsNotNone(w2.output.grad)
        graph.backward_to(node, z)
        self.assertIsNone(w1.output.grad)
        self.assertIsNone(w2.output.grad)

    def test_truncated_gradient_matches_full_backward(self):
        graph, x, w1, w2, z, node = self._chain()
        truncated = graph.backward_to(node, z).data.copy()
        graph.backward(node)
        np.testing.assert_array_equal(truncated, z.output.grad)

    def test_stop_at_must_be_an_ancestor(self):
        graph, x, w1, w2, z, node = self._chain()
        stray = graph.leaf(Tensor(np.zeros((1, 1, 6, 6))), name='stray')
        with self.assertRaises(GraphError):
            graph.backward_to(node, stray)

    def test_loss_must_be_scalar(self):
        graph, x, w1, w2, z, node = self._chain()
        with self.assertRaises(ContractError):
            graph.backward_to(z, x)


class LossTests(SimpleTestCase):

    def _pred_graph(self, pred):
        graph = Graph()
        return graph, graph.leaf(Tensor(pred, requires_grad=True), name='pred')

    def test_mask_sum_decomposes_gradient(self):
        rng = np.random.default_rng(9)
        pred = rng.normal(size=(1, 1, 5, 5))
        values = rng.normal(size=(1, 5, 5))
        m1 = np.zeros((1, 5, 5))
        m2 = np.zeros((1, 5, 5))
        m1[0, 1, 1] = m1[0, 3, 2] = 1.0
        m2[0, 0, 4] = 1.0
        grads = []
        for mask in (m1, m2, m1 + m2):
            graph, p = self._pred_graph(pred)
            node = losses.loss(p, _target(values, mask), 'l2', reduction='sum')
            graph.backward(node)
            grads.append(p.output.grad.copy())
        np.testing.assert_allclose(grads[0] + grads[1], grads[2], atol=1e-12)

    def test_backward_is_linear_in_the_loss(self):
        rng = np.random.default_rng(10)
        pred = rng.normal(size=(1, 1, 6, 6))
        values = rng.normal(size=(1, 6, 6))
        m1 = (rng.uniform(size=(1, 6, 6)) < 0.4).astype(float)
        m2 = (rng.uniform(size=(1, 6, 6)) < 0.4).astype(float)

        def gradient(a, b):
            graph, p = self._pred_graph(pred)
            first = losses.loss(p, _target(values, m1), 'l2')
            second = losses.loss(p, _target(values, m2), 'berhu')
            graph.backward(ops.add(ops.scale(first, a), ops.scale(second, b)))
            return p.output.grad.copy()

        g1, g2 = gradient(1.0, 0.0), gradient(0.0, 1.0)
        for a, b in ((2.5, -0.7), (-3.0, 0.25), (0.1, 10.0)):
            np.testing.assert_allclose(gradient(a, b), a * g1 + b * g2, rtol=0, atol=1e-12)

    def test_empty_mask(self):
        graph, p = self._pred_graph(np.ones((1, 1, 4, 4)))
        node = losses.loss(p, _target(np.ones((1, 4, 4)), np.zeros((1, 4, 4))), 'l1')
        self.assertEqual(float(graph.forward(node).data), 0.0)
        self.assertTrue(node.no_observation)
        graph.backward(node)
        self.assertFalse(p.output.grad.any())

    def test_l1_gradient_is_zero_on_exact_match(self):
        graph, p = self._pred_graph(np.full((1, 1, 2, 2), 3.0))
        mask = np.ones((1, 2, 2))
        node = losses.loss(p, _target(np.full((1, 2, 2), 3.0), mask), 'l1')
        graph.backward(node)
        self.assertFalse(p.output.grad.any())

    def test_mean_reduction_divides_by_observed_count(self):
        graph, p = self._pred_graph(np.zeros((1, 1, 2, 2)))
        mask = np.array([[[1.0, 0.0], [1.0, 0.0]]])
        node = losses.loss(p, _target(np.array([[[1.0, 9.0], [3.0, 9.0]]]), mask), 'l1')
        self.assertAlmostEqual(float(graph.forward(node).data), 2.0)

    def test_berhu_threshold_and_continuity(self):
        residual = np.array([0.1, -0.5, 1.0])
        c = losses.berhu_threshold(residual, np.ones(3))
        self.assertAlmostEqual(c, 0.2)
        below, _ = losses.pointwise(losses.LossKind.BERHU, np.array([c - 1e-12]), c)
        above, _ = losses.pointwise(losses.LossKind.BERHU, np.array([c + 1e-12]), c)
        self.assertAlmostEqual(below[0], above[0], places=9)

    def test_unknown_loss_kind(self):
        with self.assertRaises(ConfigurationError):
            losses.LossKind.parse('huber')

    def test_size_mismatch(self):
        graph, p = self._pred_graph(np.zeros((1, 1, 2, 2)))
        with self.assertRaises(ConfigurationError):
            losses.loss(p, _target(np.zeros((1, 3, 3)), np.ones((1, 3, 3))))


class GraphTests(SimpleTestCase):

    def test_non_finite_input_raises(self):
        graph = Graph()
        x = graph.leaf(Tensor(np.array([[[[1.0, np.inf]]]])))
        with self.assertRaises(NumericError):
            graph.forward(ops.relu(x))

    def test_forward_is_deterministic(self):
        rng = np.random.default_rng(2)
        x_data, w_data = rng.normal(size=(1, 3, 9, 9)), rng.normal(size=(4, 3, 3, 3))
        outs = []
        for _ in range(2):
            graph = Graph()
            out = ops.conv2d(graph.leaf(Tensor(x_data)), graph.leaf(Tensor(w_data)), padding=1)
            outs.append(graph.forward(out).tobytes())
        self.assertEqual(outs[0], outs[1])

    def test_backward_is_bitwise_deterministic(self):
        rng = np.random.default_rng(6)
        x_data, w_data = rng.normal(size=(1, 2, 8, 8)), rng.normal(size=(3, 2, 3, 3))
        values = rng.uniform(size=(1, 3, 4, 4))
        grads = []
        for _ in range(3):
            graph = Graph()
            x = graph.leaf(Tensor(x_data, requires_grad=True))
            w = graph.leaf(Tensor(w_data, requires_grad=True))
            out = ops.relu(ops.conv2d(x, w, stride=2, padding=1))
            graph.backward(losses.loss(out, _target(values, np.ones_like(values)), 'l1'))
            grads.append(x.output.grad.tobytes() + w.output.grad.tobytes())
        self.assertEqual(len(set(grads)), 1)

    def test_conv_shape_mismatch(self):
        graph = Graph()
        x = graph.leaf(Tensor(np.zeros((1, 2, 5, 5))))
        w = graph.leaf(Tensor(np.zeros((1, 3, 3, 3))))
        with self.assertRaises(ConfigurationError):
            ops.conv2d(x, w)

    def test_downsample_needs_even_size(self):
        graph = Graph()
        with self.assertRaises(ConfigurationError):
            ops.downsample2x(graph.leaf(Tensor(np.zeros((1, 1, 5, 4)))))

    def test_assign_keeps_shape(self):
        t = Tensor(np.zeros((2, 2)))
        with self.assertRaises(ConfigurationError):
            t.assign(np.zeros((3, 2)))
