#pragma once

#include <iosfwd>
#include <string>

#include "daf/params.hpp"
#include "daf/tensor.hpp"

namespace daf {

/// Portable tensor container record:
///   magic "DAFT", version u8 (=1), rank u8, extents u32 little-endian,
///   payload f32 little-endian, row-major.
void write_daft(std::ostream& os, const Tensor& t);
Tensor read_daft(std::istream& is);

void save_daft_file(const std::string& path, const Tensor& t);
Tensor load_daft_file(const std::string& path);

/// Checkpoint: every parameter appended as a DAFT record into one file, plus
/// a JSON index mapping parameter name to the record's byte offset.
void save_checkpoint(const ParamStore& store, const std::string& daft_path,
                     const std::string& index_path);

/// Load values back into an existing store; names and shapes must match.
void load_checkpoint(ParamStore& store, const std::string& daft_path, const std::string& index_path);

}  // namespace daf
