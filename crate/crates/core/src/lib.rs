//! Floor-plan reconstruction from top-view density maps.
//!
//! Room segments are polygonized into a small set of candidate polygons per
//! segment. A Monte Carlo tree search then picks at most one candidate per
//! segment, scoring every leaf after a short gradient-based refinement of
//! the selected polygons against a differentiable objective: a pluggable
//! fitness scorer plus angle, total-variation and drift regularizers.
//!
//! Module map:
//!
//! * [`geometry`]: points, polygons, masks, contour tracing, simplification.
//! * [`raster`]: hard and soft (differentiable) winding-number rendering.
//! * [`objective`]: fitness scorers, regularizers and their gradients.
//! * [`proposals`]: segment merging and multi-scale polygonization.
//! * [`search`]: tree search, refinement and the exhaustive oracle.
//! * [`scene`]: density maps, synthetic scenes, file formats.
//! * [`eval`]: room / corner / angle precision and recall.
//! * [`pipeline`]: end-to-end solve used by the CLI and the test suites.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod objective;
pub mod par;
pub mod pipeline;
pub mod proposals;
pub mod raster;
pub mod scene;
pub mod search;

pub use error::{Error, Result};
pub use geometry::{GridDims, Point2, Polygon, Rect, SegmentMask};
pub use objective::{FitnessScorer, Solution, Weights};
pub use proposals::{ProposalSet, RoomSegment};
pub use raster::RasterGrid;
pub use scene::{DensityMap, GroundTruthPlan};
pub use search::{SearchConfig, SearchResult};
