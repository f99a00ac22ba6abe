//! Community detection on the reciprocal network.

mod louvain;
mod modularity;
mod partition;
mod weighted;

pub use louvain::{louvain, louvain_observed, Dendrogram, Level, LouvainConfig, MoveRecord};
pub use modularity::{modularity, weighted_modularity};
pub use partition::{
    filter_communities, CommunityRecord, DropReason, DroppedCommunity, ExclusionReport, Partition,
    PartitionFile,
};
pub use weighted::{aggregate_graph, WeightedGraph};
