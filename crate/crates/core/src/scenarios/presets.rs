//! Default simulated rooms.

use std::f64::consts::PI;

use crate::battle::Arena;
use crate::channel::ChannelModel;
use crate::environment::{Endpoint, Geometry, PropagationParams};
use crate::error::Result;
use crate::mathcore::RandomStream;
use crate::metasurface::MetasurfaceSpec;

/// Office-like propagation: Rician K = 5 and a boosted element gain so a
/// 256-element surface is comparable to the direct path at 3 m.
pub fn office_params() -> PropagationParams {
    PropagationParams {
        element_gain: PI,
        ..PropagationParams::default()
    }
}

/// Alice and Bob 3 m apart; surface A beside Alice, surface B beside Bob.
pub fn office_arena(distance_a: f64, distance_b: f64, params: &PropagationParams, stream: &mut RandomStream) -> Result<Arena> {
    let geometry = Geometry::office(distance_a, distance_b);
    let model = ChannelModel::synthesize(
        &geometry,
        params,
        MetasurfaceSpec::binary(256),
        MetasurfaceSpec::binary(256),
        Endpoint::Alice,
        Endpoint::Bob,
        stream,
    )?;
    Ok(Arena {
        model,
        geometry: Some(geometry),
    })
}

/// Office arena where B's sub-channels are an exact copy of A's.
pub fn equal_arena(stream: &mut RandomStream) -> Result<Arena> {
    let a = office_arena(0.3, 0.3, &office_params(), stream)?;
    Ok(Arena {
        model: a.model.equalized()?,
        geometry: a.geometry,
    })
}
