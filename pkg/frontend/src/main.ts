// Page entry point: read the one config value, mount the widget, start.

import { ServiceClient } from "./api.js";
import { createChatApp } from "./app.js";

declare global {
  interface Window {
    /** Service origin; set in index.html. Empty string means same origin. */
    EGCR_API_BASE?: string;
  }
}

const mount = document.getElementById("app");
if (mount === null) {
  throw new Error("missing #app mount point");
}
const client = new ServiceClient(window.EGCR_API_BASE ?? "");
void createChatApp(mount, client).init();
