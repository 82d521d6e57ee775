export {
  EnvClient,
  ProtocolError,
  type ActionBounds,
  type ConfigReply,
  type ObservationReply,
  type ScenariosReply,
  type StepInfo,
  type StepReply,
  type WireGaussian,
  type WireObservation,
  type WirePedestrian,
  type WireVehicle,
} from "./protocol.js";

export {
  CrowdNavAdapter,
  type AdapterConfig,
  type FlatObservation,
  type StepResult,
} from "./adapter.js";
