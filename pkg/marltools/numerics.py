"""
Dense numerics for the Q-networks: activations, multilayer perceptrons
with hand-written backpropagation, the Adam optimizer, and a
finite-difference gradient oracle.

All tensors are `np.ndarray` of dtype float64. Weight matrices are stored
as `(fan_out, fan_in)` so that a layer computes `W @ x + b`; batched
inputs are stacked as rows, `(batch, fan_in)`.

Functions
---------
relu
    Elementwise `max(0, x)`.
softmax
    Numerically stable softmax along the last axis.
mlp_forward
    Forward pass of an `MlpParams` network, returning a backprop cache.
mlp_backward
    Exact reverse-mode gradients of `<output, output_gradient>`.
numeric_gradient
    Central differences of a scalar objective over in-place perturbed
    arrays.
finite_diff_check
    Max relative error between `mlp_backward` and central differences.
adam_step
    One bias-corrected Adam update, in place.
mse
    (Weighted) mean squared error and its gradient.

Attributes
----------
HIDDEN_SIZES : tuple[int, int]
    Widths of the two hidden layers of a plain Q-network.
"""
__all__ = [
    'HIDDEN_SIZES',
    'ShapeError',
    'NonFiniteError',
    'check_shape',
    'check_finite',
    'relu',
    'softmax',
    'MlpParams',
    'MlpCache',
    'GradientSet',
    'mlp_forward',
    'mlp_backward',
    'numeric_gradient',
    'relative_error',
    'finite_diff_check',
    'adam_step',
    'mse',
]
import numpy as np


HIDDEN_SIZES = (64, 128)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ShapeError(ValueError):
    """Raised when array dimensions do not match"""
    pass


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or a loss contains NaN or Inf"""
    pass


def check_shape(array, shape, name='array'):
    """
    Check that an array has the expected shape.

    Parameters
    ----------
    array : array_like
    shape : tuple[int or None]
        Expected shape. `None` matches any size along that axis.
    name : str
        Name used in the error message.

    Returns
    -------
    array : np.ndarray
    """
    array = np.asarray(array)
    ok = array.ndim == len(shape) and all(
        expected is None or expected == actual
        for expected, actual in zip(shape, array.shape))
    if not ok:
        expected = tuple('*' if s is None else s for s in shape)
        raise ShapeError(
            f'{name}: expected shape {expected}, got {array.shape}')
    return array


def _as_real(x):
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def check_finite(array, name='array'):
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f'{name} contains non-finite values')
    return array


def relu(x):
    """Rectified linear unit, `max(0, x)` elementwise"""
    x = _as_real(x)
    return np.maximum(x, 0)


def softmax(x, axis=-1):
    """
    Softmax along one axis, computed with max-subtraction.

    Parameters
    ----------
    x : (..., n) array_like
        Logits. Must be nonempty along `axis`.

    Returns
    -------
    p : (..., n) np.ndarray
        Probabilities, summing to one along `axis`.
    """
    x = _as_real(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError('softmax of an empty vector')
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


class GradientSet:
    """
    Gradients of a scalar with respect to every parameter of an
    `MlpParams`, plus the gradient with respect to the network input.
    """

    def __init__(self, weights, biases, inputs=None):
        self.weights = list(weights)
        self.biases = list(biases)
        self.inputs = inputs

    def parameters(self):
        """Gradients in parameter order `[W1, b1, W2, b2, ...]`"""
        return [g for pair in zip(self.weights, self.biases) for g in pair]


class MlpParams:
    """
    Parameters of a fully connected ReLU network, with Adam state.

    Every layer but the last is followed by a ReLU. If `output_relu` is
    set the last layer is rectified too (used for embedding layers).

    Attributes
    ----------
    weights : list[(fan_out, fan_in) np.ndarray]
    biases : list[(fan_out,) np.ndarray]
    first_moments, second_moments : list[np.ndarray]
        Adam moment accumulators, in parameter order `[W1, b1, ...]`.
    step : int
        Number of optimizer steps taken.
    """

    def __init__(self, weights, biases, output_relu=False):
        weights = [np.array(w, dtype=np.float64) for w in weights]
        biases = [np.array(b, dtype=np.float64) for b in biases]
        if not weights or len(weights) != len(biases):
            raise ShapeError('An MLP needs as many biases as weights '
                             '(and at least one layer)')
        for k, (w, b) in enumerate(zip(weights, biases)):
            check_shape(w, (None, None), f'W{k+1}')
            check_shape(b, (w.shape[0],), f'b{k+1}')
            if k and w.shape[1] != weights[k-1].shape[0]:
                raise ShapeError(
                    f'W{k+1} expects {w.shape[1]} inputs but layer {k} '
                    f'has {weights[k-1].shape[0]} outputs')
        self.weights = weights
        self.biases = biases
        self.output_relu = bool(output_relu)
        self.first_moments = [np.zeros_like(p) for p in self.parameters()]
        self.second_moments = [np.zeros_like(p) for p in self.parameters()]
        self.step = 0

    @classmethod
    def initialize(cls, sizes, rng, output_relu=False):
        """
        Random network, uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.

        Parameters
        ----------
        sizes : sequence[int]
            `[input, hidden..., output]`
        rng : np.random.Generator
        output_relu : bool
        """
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, fan_out))
        return cls(weights, biases, output_relu)

    @property
    def sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def input_size(self):
        return self.weights[0].shape[1]

    @property
    def output_size(self):
        return self.weights[-1].shape[0]

    def parameters(self):
        """Parameter arrays in order `[W1, b1, W2, b2, ...]`"""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def named_parameters(self, prefix=''):
        names = []
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            names += [(f'{prefix}W{k+1}', w), (f'{prefix}b{k+1}', b)]
        return names

    def load_arrays(self, arrays):
        """Overwrite parameters (in `parameters()` order) in place"""
        arrays = list(arrays)
        params = self.parameters()
        if len(arrays) != len(params):
            raise ShapeError(f'Expected {len(params)} arrays, '
                             f'got {len(arrays)}')
        for k, (p, a) in enumerate(zip(params, arrays)):
            p[...] = check_shape(a, p.shape, f'parameter {k}')
        return self

    def copy(self):
        new = MlpParams(self.weights, self.biases, self.output_relu)
        new.first_moments = [m.copy() for m in self.first_moments]
        new.second_moments = [v.copy() for v in self.second_moments]
        new.step = self.step
        return new

    def __repr__(self):
        sizes = '-'.join(map(str, self.sizes))
        return f'MlpParams({sizes}, output_relu={self.output_relu})'


class MlpCache:
    """Layer inputs and pre-activations saved by `mlp_forward`"""

    def __init__(self, inputs, preacts, squeeze, output_relu):
        self.inputs = inputs
        self.preacts = preacts
        self.squeeze = squeeze
        self.output_relu = output_relu

    @property
    def pattern(self):
        """Boolean masks of active ReLU units, one per rectified layer"""
        rectified = self.preacts if self.output_relu else self.preacts[:-1]
        return tuple(z > 0 for z in rectified)


def _forward(weights, biases, x, output_relu):
    squeeze = x.ndim == 1
    a = np.atleast_2d(x)
    inputs, preacts = [], []
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = np.maximum(z, 0) if (k < last or output_relu) else z
    out = a[0] if squeeze else a
    return out, MlpCache(inputs, preacts, squeeze, output_relu)


def mlp_forward(params, x):
    """
    Forward pass.

    Parameters
    ----------
    params : MlpParams
    x : (input_size,) or (batch, input_size) array_like

    Returns
    -------
    output : (output_size,) or (batch, output_size) np.ndarray
    cache : MlpCache
    """
    x = _as_real(x)
    if x.ndim not in (1, 2):
        raise ShapeError(f'MLP input must be a vector or a batch of '
                         f'vectors, got shape {x.shape}')
    if x.shape[-1] != params.input_size:
        raise ShapeError(f'MLP expects inputs of size {params.input_size}, '
                         f'got {x.shape[-1]}')
    return _forward(params.weights, params.biases, x, params.output_relu)


def mlp_backward(params, cache, output_gradient):
    """
    Backward pass.

    Computes the gradient of `sum(output * output_gradient)` with respect
    to every parameter (summed over the batch) and to the input.
    The ReLU subgradient at zero is zero.

    Parameters
    ----------
    params : MlpParams
        The parameters used to produce `cache`.
    cache : MlpCache
    output_gradient : array_like
        Same shape as the forward output.

    Returns
    -------
    grads : GradientSet
    """
    if len(cache.preacts) != len(params.weights) or any(
            a.shape[1] != w.shape[1]
            for a, w in zip(cache.inputs, params.weights)):
        raise ShapeError('Cache was not produced by these parameters')
    delta = np.atleast_2d(_as_real(output_gradient))
    if delta.shape != cache.preacts[-1].shape or (
            cache.squeeze != (np.ndim(output_gradient) == 1)):
        raise ShapeError(
            f'Output gradient has shape {np.shape(output_gradient)}, '
            f'expected {cache.preacts[-1].shape[-1]} outputs')
    last = len(params.weights) - 1
    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.weights)
    for k in reversed(range(len(params.weights))):
        if k < last or params.output_relu:
            delta = delta * (cache.preacts[k] > 0)
        grad_w[k] = delta.T @ cache.inputs[k]
        grad_b[k] = delta.sum(axis=0)
        delta = delta @ params.weights[k]
    grad_x = delta[0] if cache.squeeze else delta
    return GradientSet(grad_w, grad_b, grad_x)


def _same_pattern(pattern, reference):
    return all(np.array_equal(p, r) for p, r in zip(pattern, reference))


def numeric_gradient(objective, arrays, step=1e-5):
    """
    Central finite differences of a scalar objective.

    Each entry of each array is perturbed in place by `+step` and
    `-step`. Entries whose perturbation changes the ReLU activation
    pattern (i.e., crosses a kink) are left as NaN.

    Parameters
    ----------
    objective : callable() -> (float, tuple[np.ndarray])
        Returns the objective value and the activation pattern.
    arrays : list[np.ndarray]
        Arrays the objective reads from. Restored on exit.
    step : float

    Returns
    -------
    grads : list[np.ndarray]
    """
    _, reference = objective()
    grads = []
    for array in arrays:
        grad = np.full(array.shape, np.nan)
        for index in np.ndindex(*array.shape):
            original = array[index]
            array[index] = original + step
            plus, plus_pattern = objective()
            array[index] = original - step
            minus, minus_pattern = objective()
            array[index] = original
            if (_same_pattern(plus_pattern, reference)
                    and _same_pattern(minus_pattern, reference)):
                grad[index] = (plus - minus) / (2 * step)
        grads.append(grad)
    return grads


def relative_error(analytic, numeric, floor=1e-8):
    """
    Max of `|a - n| / max(floor, |a| + |n|)` over all entries that
    `numeric` does not mark as NaN.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        keep = ~np.isnan(n)
        if not keep.any():
            continue
        a, n = a[keep], n[keep]
        err = np.abs(a - n) / np.maximum(floor, np.abs(a) + np.abs(n))
        worst = max(worst, float(err.max()))
    return worst


def finite_diff_check(params, x, output_gradient, step=1e-5):
    """
    Compare `mlp_backward` against central finite differences.

    The perturbed forward passes are evaluated in extended precision
    (`np.longdouble`) so that cancellation noise stays far below the
    gradients being checked.

    Parameters
    ----------
    params : MlpParams
    x : array_like
        Network input (vector or batch).
    output_gradient : array_like
        Weights of the scalar objective `sum(output * output_gradient)`.
    step : float

    Returns
    -------
    error : float
        Max relative error over all parameters not sitting on a kink.
    """
    _, cache = mlp_forward(params, x)
    analytic = mlp_backward(params, cache, output_gradient).parameters()

    weights = [w.astype(np.longdouble) for w in params.weights]
    biases = [b.astype(np.longdouble) for b in params.biases]
    xe = np.asarray(x, dtype=np.longdouble)
    ge = np.asarray(output_gradient, dtype=np.longdouble)

    def objective():
        out, ext_cache = _forward(weights, biases, xe, params.output_relu)
        return np.sum(out * ge), ext_cache.pattern

    arrays = [p for pair in zip(weights, biases) for p in pair]
    numeric = numeric_gradient(objective, arrays, step)
    return relative_error(analytic, numeric)


def adam_step(params, grads, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
              eps=ADAM_EPS):
    """
    Bias-corrected Adam update, applied in place.

    Parameters
    ----------
    params : MlpParams
    grads : GradientSet
    lr : float
        Learning rate (> 0).

    Returns
    -------
    params : MlpParams
    """
    if not lr > 0:
        raise ValueError(f'Learning rate must be positive, got {lr}')
    values = params.parameters()
    gradients = grads.parameters()
    if len(gradients) != len(values):
        raise ShapeError('Gradient set does not match the parameters')
    for k, (p, g) in enumerate(zip(values, gradients)):
        check_shape(g, p.shape, f'gradient {k}')
        check_finite(g, f'gradient {k}')

    params.step += 1
    t = params.step
    correction1 = 1 - beta1 ** t
    correction2 = 1 - beta2 ** t
    for p, g, m, v in zip(values, gradients,
                          params.first_moments, params.second_moments):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * np.square(g)
        p -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return params


def mse(pred, target, weights=None):
    """
    Mean squared error.

    Parameters
    ----------
    pred, target : (n,) array_like
    weights : (n,) array_like, optional
        Per-element importance weights, applied before averaging.

    Returns
    -------
    loss : float
        `mean(weights * (pred - target)**2)`
    gradient : (n,) np.ndarray
        `2 * weights * (pred - target) / n`
    """
    pred = check_shape(_as_real(pred), (None,), 'pred')
    target = check_shape(_as_real(target), (len(pred),), 'target')
    if weights is None:
        weights = np.ones_like(pred)
    weights = check_shape(_as_real(weights), (len(pred),), 'weights')
    if len(pred) == 0:
        raise ShapeError('mse of empty vectors')
    diff = pred - target
    loss = float(np.mean(weights * np.square(diff)))
    gradient = 2 * weights * diff / len(pred)
    return loss, gradient
