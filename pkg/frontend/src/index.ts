export * from "./protocol.js";
export * from "./viewState.js";
export * from "./input.js";
export * from "./render.js";
export { SessionClient } from "./client.js";
