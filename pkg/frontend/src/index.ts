export {
  GatewayConnection,
  ToolCallError,
  PROTOCOL_VERSION,
  type GatewayOptions,
  type ToolSpec,
  type ToolResult,
} from "./wire.js";
export {
  MockBackend,
  type CompletionBackend,
  type Completion,
  type ToolRequest,
  type ToolOutcome,
} from "./backend.js";
export {
  ChatSession,
  renderTranscript,
  writeTranscript,
  type SessionOptions,
  type Transcript,
  type Turn,
  type UserTurn,
  type ModelTurn,
  type ToolTurn,
  type ResolvedToolCall,
} from "./session.js";
