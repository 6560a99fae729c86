export {
  EventStream, VoxelGrid, FormatError,
  readEvents, readVoxel, readWeights, writeWeights, readPgm, writePgm,
} from "./formats.js";
export { CellState, CellStep, DensityGatedCell } from "./cells.js";
export { GlobalContextBlock } from "./blocks.js";
export {
  DualMemoryEncoder, EncoderOptions, EncoderState, EncoderStep, disposeState,
} from "./encoder.js";
export {
  ReconNet, Sequence, TrainOptions, lowDensityMask, sequenceLoss, ssimPooled,
  trainRecon,
} from "./net.js";
export {
  LetcEvents, LetcPair, TimestampWeightModel, assembleRows, bilinearRows,
  eventsForWindow, letcLoss, pretrain,
} from "./timeWeights.js";
export { FileRecord, fileRecord, sha256File, stableStringify, writeManifest } from "./manifest.js";
