use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    None,
}

/// (height, width, channels). Dense outputs are `(1, 1, units)`.
pub type Shape = (usize, usize, usize);

/// One layer of the network. `cpf`/`kpf` are channel/kernel parallelism
/// factors; they only ever affect loop tiling, never results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub filter: (usize, usize),
    pub stride: (usize, usize),
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub activation: Activation,
    pub cpf: usize,
    pub kpf: usize,
}

impl LayerSpec {
    /// Valid (unpadded) convolution.
    pub fn conv(
        in_shape: Shape,
        filter: (usize, usize),
        stride: (usize, usize),
        out_channels: usize,
        cpf: usize,
        kpf: usize,
    ) -> Result<Self, Error> {
        let (h, w, _) = in_shape;
        if filter.0 == 0 || filter.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::config("conv filter and stride must be positive"));
        }
        if filter.0 > h || filter.1 > w {
            return Err(Error::config(format!("filter {filter:?} larger than input {in_shape:?}")));
        }
        let out_shape = ((h - filter.0) / stride.0 + 1, (w - filter.1) / stride.1 + 1, out_channels);
        let layer = LayerSpec {
            kind: LayerKind::Conv,
            filter,
            stride,
            in_shape,
            out_shape,
            activation: Activation::Relu,
            cpf,
            kpf,
        };
        layer.check_tiling()?;
        Ok(layer)
    }

    /// Fully connected layer over the flattened input, no activation.
    pub fn dense(in_shape: Shape, units: usize, cpf: usize, kpf: usize) -> Result<Self, Error> {
        let layer = LayerSpec {
            kind: LayerKind::Dense,
            filter: (1, 1),
            stride: (1, 1),
            in_shape,
            out_shape: (1, 1, units),
            activation: Activation::None,
            cpf,
            kpf,
        };
        layer.check_tiling()?;
        Ok(layer)
    }

    fn check_tiling(&self) -> Result<(), Error> {
        if self.cpf == 0 || self.in_shape.2 % self.cpf != 0 {
            return Err(Error::config(format!(
                "cpf {} does not divide input channels {}",
                self.cpf, self.in_shape.2
            )));
        }
        if self.kpf == 0 || self.out_shape.2 % self.kpf != 0 {
            return Err(Error::config(format!(
                "kpf {} does not divide output channels {}",
                self.kpf, self.out_shape.2
            )));
        }
        Ok(())
    }

    /// Number of inputs feeding one output value.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.filter.0 * self.filter.1 * self.in_shape.2,
            LayerKind::Dense => self.in_shape.0 * self.in_shape.1 * self.in_shape.2,
        }
    }

    /// Number of outputs each input feeds, for Xavier scaling:
    /// `k_h * k_w * C_out` for convolutions, `units` for dense layers.
    pub fn fan_out(&self) -> usize {
        match self.kind {
            LayerKind::Conv => self.filter.0 * self.filter.1 * self.out_shape.2,
            LayerKind::Dense => self.out_shape.2,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.fan_in() * self.out_shape.2
    }
}

/// An ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<LayerSpec>,
    total_params: usize,
}

impl NetworkSpec {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self, Error> {
        for pair in layers.windows(2) {
            if pair[0].out_shape != pair[1].in_shape {
                return Err(Error::config(format!(
                    "layer output {:?} does not feed next input {:?}",
                    pair[0].out_shape, pair[1].in_shape
                )));
            }
        }
        if let Some(pos) = layers.iter().position(|l| l.kind == LayerKind::Dense) {
            if pos + 1 != layers.len() {
                return Err(Error::config("a dense layer must be the last layer"));
            }
        }
        let total_params = layers.iter().map(LayerSpec::weight_count).sum();
        Ok(NetworkSpec { layers, total_params })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn total_params(&self) -> usize {
        self.total_params
    }

    pub fn input_shape(&self) -> Option<Shape> {
        self.layers.first().map(|l| l.in_shape)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_shape.0 * l.out_shape.1 * l.out_shape.2)
    }

    /// Offset of each layer's weights in the flat genome.
    pub fn layer_offsets(&self) -> Vec<usize> {
        self.layers
            .iter()
            .scan(0, |acc, l| {
                let off = *acc;
                *acc += l.weight_count();
                Some(off)
            })
            .collect()
    }
}

/// The 84x84x4 -> 18 network: three valid convolutions and a dense layer.
pub fn default_spec() -> NetworkSpec {
    let build = || -> Result<NetworkSpec, Error> {
        let c1 = LayerSpec::conv((84, 84, 4), (8, 8), (4, 4), 32, 4, 32)?;
        let c2 = LayerSpec::conv(c1.out_shape, (4, 4), (2, 2), 64, 32, 4)?;
        let c3 = LayerSpec::conv(c2.out_shape, (3, 3), (1, 1), 64, 4, 32)?;
        let fc = LayerSpec::dense(c3.out_shape, 18, 4, 1)?;
        NetworkSpec::new(vec![c1, c2, c3, fc])
    };
    let spec = build().expect("default network is well formed");
    let shapes: Vec<Shape> = spec.layers.iter().map(|l| l.out_shape).collect();
    assert_eq!(shapes, [(20, 20, 32), (9, 9, 64), (7, 7, 64), (1, 1, 18)]);
    spec
}

/// Per-layer weight counts.
pub fn param_shapes(spec: &NetworkSpec) -> Vec<usize> {
    spec.layers.iter().map(LayerSpec::weight_count).collect()
}
