use e2m::audit::{RandomPoint, RawCoords};
use e2m::io::RowCodec;
use e2m::SignedMean;

/// Capabilities every response space offers to the command layer.
pub trait CliSpace: RowCodec<f64> + SignedMean<f64> + RandomPoint<f64> + RawCoords<f64> + Clone + 'static {}

impl<S> CliSpace for S where S: RowCodec<f64> + SignedMean<f64> + RandomPoint<f64> + RawCoords<f64> + Clone + 'static {}

/// Builds the concrete space named by a header and evaluates `$body` with it.
macro_rules! with_space {
    ($header:expr, $space:ident => $body:expr) => {{
        let header: &e2m::io::DataHeader = &$header;
        match header.space {
            e2m::SpaceId::Wasserstein1d => {
                let $space = <e2m::space::Wasserstein1d as e2m::io::RowCodec<f64>>::from_header(header)?;
                $body
            }
            e2m::SpaceId::Network => {
                let $space = <e2m::space::Network as e2m::io::RowCodec<f64>>::from_header(header)?;
                $body
            }
            e2m::SpaceId::SpdPower => {
                let $space = <e2m::space::SpdPower as e2m::io::RowCodec<f64>>::from_header(header)?;
                $body
            }
            e2m::SpaceId::SpdBw => {
                let $space = <e2m::space::SpdBw as e2m::io::RowCodec<f64>>::from_header(header)?;
                $body
            }
        }
    }};
}

/// Builds the scenario for a [`DgpKind`](e2m::simgen::DgpKind), applying an
/// optional oracle draw count, and evaluates `$body` with it.
macro_rules! with_scenario {
    ($kind:expr, $draws:expr, $sc:ident => $body:expr) => {{
        use e2m::simgen::{DgpKind, DistributionDgp, NetworkDgp, SpdBwDgp, SpdPowerDgp};
        let draws: Option<usize> = $draws;
        match $kind {
            DgpKind::Distribution => {
                let $sc = DistributionDgp::default();
                $body
            }
            DgpKind::Network => {
                let $sc = NetworkDgp::default();
                $body
            }
            DgpKind::SpdPower => {
                let mut $sc = SpdPowerDgp::default();
                if let Some(d) = draws {
                    $sc.oracle_draws = d;
                }
                $body
            }
            DgpKind::SpdBw => {
                let mut $sc = SpdBwDgp::default();
                if let Some(d) = draws {
                    $sc.oracle_draws = d;
                }
                $body
            }
        }
    }};
}

pub(crate) use {with_scenario, with_space};
