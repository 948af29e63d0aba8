//! Small Turing machine spaces and their halting-output censuses.

mod census;
mod machine;
mod table_io;

pub use census::{
    build_frequency_table, build_frequency_table_with, build_partial_table, census_programs, CensusEntry, CensusMode,
    CensusOptions, OutputFrequencyTable, SpaceId, DEFAULT_BUDGET, DEFAULT_EXHAUSTIVE_LIMIT,
};
pub use machine::{
    decode_machine, encode_machine, machine_count, run_machine, Move, Next, RunOutcome, RunStatus, Transition,
    TuringMachineSpec, FORMALISM, MAX_SYMBOLS,
};
pub(crate) use table_io::sha256_hex;
pub use table_io::{load_table, persist_table, table_checksum, table_from_str, table_to_string, TABLE_HEADER};
