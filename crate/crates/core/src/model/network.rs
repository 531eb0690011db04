use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;

use crate::{Error, Result, Rng};

/// Fully connected layer `y = x W + b` with `W` of shape `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    fn affine(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight);
        z += &self.bias;
        z
    }

    fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(self.bias.iter())
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }
}

/// Feature extractor (tanh MLP) followed by a linear softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub extractor: Vec<Dense>,
    pub classifier: Dense,
}

/// Gradients with the same layout as [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub extractor: Vec<Dense>,
    pub classifier: Dense,
}

macro_rules! layered {
    ($t:ty) => {
        impl $t {
            pub fn layers(&self) -> impl Iterator<Item = &Dense> {
                self.extractor.iter().chain(std::iter::once(&self.classifier))
            }

            pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
                self.extractor.iter_mut().chain(std::iter::once(&mut self.classifier))
            }

            /// Every scalar, layer by layer: weights row-major, then bias.
            pub fn iter(&self) -> impl Iterator<Item = &f64> {
                self.layers().flat_map(Dense::iter)
            }

            pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
                self.layers_mut().flat_map(Dense::iter_mut)
            }

            pub fn num_scalars(&self) -> usize {
                self.layers().map(|l| l.weight.len() + l.bias.len()).sum()
            }

            fn same_shape<U>(&self, other: &U) -> bool
            where
                U: Layered,
            {
                let a: Vec<_> = self.layers().map(|l| l.weight.dim()).collect();
                a == other.shapes()
            }
        }

        impl Layered for $t {
            fn shapes(&self) -> Vec<(usize, usize)> {
                self.layers().map(|l| l.weight.dim()).collect()
            }
        }
    };
}

pub(crate) trait Layered {
    fn shapes(&self) -> Vec<(usize, usize)>;
}

layered!(NetworkParams);
layered!(GradientSet);

impl NetworkParams {
    /// Seeded Glorot-uniform initialization of a `input_dim → hidden… → K` net.
    pub fn init(input_dim: usize, hidden: &[usize], num_classes: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::config(format!(
                "invalid architecture {input_dim} -> {hidden:?} -> {num_classes}"
            )));
        }
        let mut extractor = Vec::with_capacity(hidden.len());
        let mut fan_in = input_dim;
        for &h in hidden {
            extractor.push(Dense::glorot(fan_in, h, rng));
            fan_in = h;
        }
        let classifier = Dense::glorot(fan_in, num_classes, rng);
        Ok(Self {
            extractor,
            classifier,
        })
    }

    /// Builds params from explicit layers, checking that shapes chain.
    pub fn from_layers(extractor: Vec<Dense>, classifier: Dense) -> Result<Self> {
        let p = Self {
            extractor,
            classifier,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extractor.is_empty() {
            return Err(Error::shape("extractor needs at least one layer"));
        }
        let mut prev: Option<usize> = None;
        for (i, l) in self.layers().enumerate() {
            if l.bias.len() != l.fan_out() {
                return Err(Error::shape(format!("layer {i}: bias length {} != {}", l.bias.len(), l.fan_out())));
            }
            if let Some(p) = prev {
                if p != l.fan_in() {
                    return Err(Error::shape(format!("layer {i}: fan_in {} != previous fan_out {p}", l.fan_in())));
                }
            }
            prev = Some(l.fan_out());
        }
        if self.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite parameter"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.extractor[0].fan_in()
    }

    pub fn feature_dim(&self) -> usize {
        self.classifier.fan_in()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.fan_out()
    }

    pub fn zero_grad(&self) -> GradientSet {
        GradientSet {
            extractor: self.extractor.iter().map(Dense::zeros_like).collect(),
            classifier: self.classifier.zeros_like(),
        }
    }

    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<ForwardTrace> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "batch has {} columns, network expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut activations = Vec::with_capacity(self.extractor.len());
        let mut h = batch.to_owned();
        for layer in &self.extractor {
            let a = layer.affine(h.view()).mapv_into(f64::tanh);
            activations.push(a.clone());
            h = a;
        }
        let logits = self.classifier.affine(h.view());
        let probs = softmax_rows(&logits);
        Ok(ForwardTrace {
            inputs: batch.to_owned(),
            activations,
            logits,
            probs,
        })
    }

    /// Reverse-mode gradients of a loss whose partial derivatives with
    /// respect to the trace outputs are given in `upstream`.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Upstream) -> Result<GradientSet> {
        if trace.activations.len() != self.extractor.len()
            || trace.inputs.ncols() != self.input_dim()
            || trace.logits.ncols() != self.num_classes()
            || trace.features().ncols() != self.feature_dim()
        {
            return Err(Error::shape("trace was not produced by these params"));
        }
        let n = trace.len();
        let check = |m: &Option<Array2<f64>>, cols: usize, what: &str| match m {
            Some(m) if m.dim() != (n, cols) => Err(Error::shape(format!(
                "upstream {what} gradient is {:?}, expected ({n}, {cols})",
                m.dim()
            ))),
            _ => Ok(()),
        };
        check(&upstream.features, self.feature_dim(), "feature")?;
        check(&upstream.logits, self.num_classes(), "logit")?;
        check(&upstream.probs, self.num_classes(), "probability")?;

        let mut d_logits = upstream
            .logits
            .clone()
            .unwrap_or_else(|| Array2::zeros((n, self.num_classes())));
        if let Some(dp) = &upstream.probs {
            d_logits += &softmax_vjp(&trace.probs, dp);
        }

        let mut grads = self.zero_grad();
        let features = trace.features();
        grads.classifier.weight = features.t().dot(&d_logits);
        grads.classifier.bias = d_logits.sum_axis(Axis(0));

        let mut d_h = d_logits.dot(&self.classifier.weight.t());
        if let Some(df) = &upstream.features {
            d_h += df;
        }
        for l in (0..self.extractor.len()).rev() {
            // tanh' = 1 - a^2
            let mut d_z = d_h;
            Zip::from(&mut d_z)
                .and(&trace.activations[l])
                .for_each(|g, &a| *g *= 1.0 - a * a);
            let input = if l == 0 {
                trace.inputs.view()
            } else {
                trace.activations[l - 1].view()
            };
            grads.extractor[l].weight = input.t().dot(&d_z);
            grads.extractor[l].bias = d_z.sum_axis(Axis(0));
            d_h = d_z.dot(&self.extractor[l].weight.t());
        }
        Ok(grads)
    }

    /// Softmax outputs only; cheaper than a full trace when gradients are not
    /// needed.
    pub fn predict_proba(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.forward(batch)?.probs)
    }

    pub fn embed(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let trace = self.forward(batch)?;
        Ok(trace.activations.last().cloned().expect("at least one layer"))
    }

    pub(crate) fn check_grad_shape(&self, grads: &GradientSet) -> Result<()> {
        if self.same_shape(grads) {
            Ok(())
        } else {
            Err(Error::shape("gradient layout differs from parameter layout"))
        }
    }
}

impl GradientSet {
    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &GradientSet) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::shape("gradient layouts differ"));
        }
        for (a, b) in self.layers_mut().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
        Ok(())
    }
}

/// Partial derivatives of a loss with respect to the outputs of one forward
/// pass. Absent entries are zero.
#[derive(Clone, Debug, Default)]
pub struct Upstream {
    pub features: Option<Array2<f64>>,
    pub logits: Option<Array2<f64>>,
    pub probs: Option<Array2<f64>>,
}

impl Upstream {
    pub fn logits(d: Array2<f64>) -> Self {
        Self {
            logits: Some(d),
            ..Self::default()
        }
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub inputs: Array2<f64>,
    /// tanh output of each extractor layer; the last one is the embedding.
    pub activations: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

impl ForwardTrace {
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.activations.last().expect("at least one layer").view()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Index of the most probable class per row; ties go to the lower index.
    pub fn predictions(&self) -> Vec<usize> {
        argmax_rows(self.probs.view())
    }
}

pub fn argmax_rows(m: ArrayView2<'_, f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Pulls a gradient on softmax outputs back to the logits:
/// `dz = p ⊙ (dp − ⟨dp, p⟩)` row by row.
fn softmax_vjp(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(probs.dim());
    for ((mut o, p), g) in out.rows_mut().into_iter().zip(probs.rows()).zip(d_probs.rows()) {
        let dot = p.dot(&g);
        Zip::from(&mut o).and(&p).and(&g).for_each(|o, &p, &g| *o = p * (g - dot));
    }
    out
}
