import { startViewer } from "./viewer.js";

const params = new URLSearchParams(window.location.search);
void startViewer(params.get("bundle") ?? "fixtures/bundle");
